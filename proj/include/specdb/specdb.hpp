#pragma once

#include "specdb/compression.hpp"
#include "specdb/dataset.hpp"
#include "specdb/dbscan.hpp"
#include "specdb/embedding.hpp"
#include "specdb/error.hpp"
#include "specdb/eval.hpp"
#include "specdb/graph.hpp"
#include "specdb/labels.hpp"
#include "specdb/matrix.hpp"
