#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "specdb/error.hpp"
#include "specdb/labels.hpp"
#include "specdb/matrix.hpp"

namespace specdb {

struct LabeledData {
  DataMatrix data;
  std::optional<GroundTruth> truth;
};

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Splits on LF, dropping a CR before it and a single trailing empty line.
inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      return fields;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

inline std::optional<double> parse_real(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<int> parse_int(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::uint32_t read_be32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  }
  return v;
}

inline std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", static_cast<unsigned>(v));
  return buf;
}

}  // namespace detail

// Shortest text that reads back to the same double (17 significant digits).
inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvOptions {
  bool has_label_column = false;
  bool skip_header = false;
};

inline LabeledData parse_csv(std::string_view text, const CsvOptions& opts = {}) {
  auto lines = detail::split_lines(text);
  std::size_t first = opts.skip_header ? 1 : 0;
  // Trailing blank lines are tolerated; interior ones are ragged rows.
  while (lines.size() > first && detail::trim(lines.back()).empty()) lines.pop_back();
  if (lines.size() <= first) throw FormatError("empty CSV input");

  std::size_t n_fields = 0;
  std::vector<double> values;
  std::vector<int> labels;
  for (std::size_t li = first; li < lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    const auto fields = detail::split_fields(lines[li]);
    if (li == first) {
      n_fields = fields.size();
      if (opts.has_label_column && n_fields < 2) {
        throw ParseError("label column requested but row has a single field", line_no);
      }
    } else if (fields.size() != n_fields) {
      throw ParseError("expected " + std::to_string(n_fields) + " fields, got " + std::to_string(fields.size()),
                       line_no);
    }
    const std::size_t n_features = opts.has_label_column ? n_fields - 1 : n_fields;
    for (std::size_t f = 0; f < n_features; ++f) {
      const auto v = detail::parse_real(fields[f]);
      if (!v) throw ParseError("not a finite number: '" + std::string(fields[f]) + "'", line_no);
      values.push_back(*v);
    }
    if (opts.has_label_column) {
      const auto id = detail::parse_int(fields.back());
      if (!id || *id < 0) throw ParseError("bad class label: '" + std::string(fields.back()) + "'", line_no);
      labels.push_back(*id);
    }
  }

  const std::size_t n_features = opts.has_label_column ? n_fields - 1 : n_fields;
  const std::size_t n_rows = values.size() / n_features;
  LabeledData out{DataMatrix(n_rows, n_features, std::move(values)), std::nullopt};
  if (opts.has_label_column) out.truth = GroundTruth::from_labels(std::move(labels));
  return out;
}

inline LabeledData load_csv(const std::string& path, const CsvOptions& opts = {}) {
  return parse_csv(detail::read_file(path), opts);
}

inline void write_csv(std::ostream& out, const DataMatrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      out << format_real(row[j]);
    }
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const DataMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write_csv(out, m);
  if (!out) throw IoError("write failed: " + path);
}

// One integer class id per line.
inline GroundTruth load_label_csv(const std::string& path) {
  const std::string text = detail::read_file(path);
  auto lines = detail::split_lines(text);
  while (!lines.empty() && detail::trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw FormatError("empty label file " + path);
  std::vector<int> labels;
  labels.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto id = detail::parse_int(detail::trim(lines[i]));
    if (!id || *id < 0) throw ParseError("bad class label", i + 1);
    labels.push_back(*id);
  }
  return GroundTruth::from_labels(std::move(labels));
}

// ---- IDX (MNIST container) ------------------------------------------------

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

inline bool is_idx_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::array<char, 4> head{};
  if (!in.read(head.data(), 4)) return false;
  const auto magic = detail::read_be32({head.data(), 4}, 0);
  return magic == kIdxImagesMagic || magic == kIdxLabelsMagic;
}

// Images flattened row-major, pixels scaled by 1/255 into [0,1].
inline DataMatrix parse_idx_images(std::string_view bytes) {
  if (bytes.size() < 16) throw IoError("IDX images: truncated header");
  const auto magic = detail::read_be32(bytes, 0);
  if (magic != kIdxImagesMagic) {
    throw FormatError("IDX images: bad magic " + detail::hex32(magic) + ", expected " +
                      detail::hex32(kIdxImagesMagic));
  }
  const std::size_t count = detail::read_be32(bytes, 4);
  const std::size_t rows = detail::read_be32(bytes, 8);
  const std::size_t cols = detail::read_be32(bytes, 12);
  const std::size_t pixels = rows * cols;
  if (count == 0 || pixels == 0) throw FormatError("IDX images: empty image set");
  if (bytes.size() - 16 < count * pixels) {
    throw IoError("IDX images: payload truncated (" + std::to_string(bytes.size() - 16) + " of " +
                  std::to_string(count * pixels) + " bytes)");
  }
  std::vector<double> values(count * pixels);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<unsigned char>(bytes[16 + i]) / 255.0;
  }
  return DataMatrix(count, pixels, std::move(values));
}

inline std::vector<int> parse_idx_labels(std::string_view bytes) {
  if (bytes.size() < 8) throw IoError("IDX labels: truncated header");
  const auto magic = detail::read_be32(bytes, 0);
  if (magic != kIdxLabelsMagic) {
    throw FormatError("IDX labels: bad magic " + detail::hex32(magic) + ", expected " +
                      detail::hex32(kIdxLabelsMagic));
  }
  const std::size_t count = detail::read_be32(bytes, 4);
  if (bytes.size() - 8 < count) throw IoError("IDX labels: payload truncated");
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<unsigned char>(bytes[8 + i]);
  return labels;
}

inline DataMatrix load_idx_images(const std::string& path) { return parse_idx_images(detail::read_file(path)); }

inline GroundTruth load_idx_labels(const std::string& path) {
  return GroundTruth::from_labels(parse_idx_labels(detail::read_file(path)));
}

inline std::pair<DataMatrix, GroundTruth> load_idx(const std::string& images_path, const std::string& labels_path) {
  // Headers are checked before payloads so a count mismatch is reported as such.
  const std::string image_bytes = detail::read_file(images_path);
  const std::string label_bytes = detail::read_file(labels_path);
  if (image_bytes.size() >= 8 && label_bytes.size() >= 8 &&
      detail::read_be32(image_bytes, 0) == kIdxImagesMagic && detail::read_be32(label_bytes, 0) == kIdxLabelsMagic) {
    const auto n_images = detail::read_be32(image_bytes, 4);
    const auto n_labels = detail::read_be32(label_bytes, 4);
    if (n_images != n_labels) {
      throw ConsistencyError("IDX: " + std::to_string(n_images) + " images but " + std::to_string(n_labels) +
                             " labels");
    }
  }
  DataMatrix images = parse_idx_images(image_bytes);
  GroundTruth truth = GroundTruth::from_labels(parse_idx_labels(label_bytes));
  return {std::move(images), std::move(truth)};
}

// ---- synthetic data ---------------------------------------------------------

// Two interleaving unit half-circles: the upper moon centred at the origin and
// the lower moon centred at (1, 0.5). First n/2 points are moon 0.
inline std::pair<DataMatrix, GroundTruth> make_two_moons(std::size_t n, double noise_sigma, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("make_two_moons: n must be >= 2");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("make_two_moons: noise_sigma must be >= 0");
  const std::size_t n_first = n / 2;
  const std::size_t n_second = n - n_first;
  DataMatrix m(n, 2);
  std::vector<int> labels(n);
  auto angle = [](std::size_t i, std::size_t count) {
    return count == 1 ? 0.0 : std::numbers::pi * static_cast<double>(i) / static_cast<double>(count - 1);
  };
  for (std::size_t i = 0; i < n_first; ++i) {
    const double t = angle(i, n_first);
    m(i, 0) = std::cos(t);
    m(i, 1) = std::sin(t);
    labels[i] = 0;
  }
  for (std::size_t i = 0; i < n_second; ++i) {
    const double t = angle(i, n_second);
    m(n_first + i, 0) = 1.0 - std::cos(t);
    m(n_first + i, 1) = 0.5 - std::sin(t);
    labels[n_first + i] = 1;
  }
  if (noise_sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (std::size_t i = 0; i < n; ++i) {
      m(i, 0) += noise(rng);
      m(i, 1) += noise(rng);
    }
  }
  return {std::move(m), GroundTruth::from_labels(std::move(labels))};
}

// Concentric circles of radius 1 (class 0) and `factor` (class 1).
inline std::pair<DataMatrix, GroundTruth> make_two_circles(std::size_t n, double noise_sigma, double factor,
                                                           std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("make_two_circles: n must be >= 2");
  if (!(factor > 0.0 && factor < 1.0)) throw std::invalid_argument("make_two_circles: factor must be in (0, 1)");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("make_two_circles: noise_sigma must be >= 0");
  const std::size_t n_outer = n / 2;
  const std::size_t n_inner = n - n_outer;
  DataMatrix m(n, 2);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n_outer; ++i) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n_outer);
    m(i, 0) = std::cos(t);
    m(i, 1) = std::sin(t);
    labels[i] = 0;
  }
  for (std::size_t i = 0; i < n_inner; ++i) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n_inner);
    m(n_outer + i, 0) = factor * std::cos(t);
    m(n_outer + i, 1) = factor * std::sin(t);
    labels[n_outer + i] = 1;
  }
  if (noise_sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (std::size_t i = 0; i < n; ++i) {
      m(i, 0) += noise(rng);
      m(i, 1) += noise(rng);
    }
  }
  return {std::move(m), GroundTruth::from_labels(std::move(labels))};
}

// Isotropic Gaussian blobs around uniformly drawn centres in [-box, box]^D.
// Class c gets points c, c + n_classes, ...
inline std::pair<DataMatrix, GroundTruth> make_blobs(std::size_t n, std::size_t n_features, std::size_t n_classes,
                                                     double spread, double box, std::uint64_t seed) {
  if (n < 1 || n_features < 1 || n_classes < 1) throw std::invalid_argument("make_blobs: empty shape");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> centre_dist(-box, box);
  std::normal_distribution<double> noise(0.0, spread);
  DataMatrix centres(n_classes, n_features);
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t j = 0; j < n_features; ++j) centres(c, j) = centre_dist(rng);
  }
  DataMatrix m(n, n_features);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % n_classes;
    labels[i] = static_cast<int>(c);
    for (std::size_t j = 0; j < n_features; ++j) m(i, j) = centres(c, j) + noise(rng);
  }
  return {std::move(m), GroundTruth::from_labels(std::move(labels))};
}

// Zero mean, unit population variance per column. Constant columns become 0.
inline DataMatrix standardize(const DataMatrix& m) {
  DataMatrix out = m;
  const std::size_t n = m.rows();
  for (std::size_t j = 0; j < m.cols(); ++j) {
    bool constant = true;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mean += m(i, j);
      constant = constant && m(i, j) == m(0, j);
    }
    mean /= static_cast<double>(n);
    if (constant) {
      for (std::size_t i = 0; i < n; ++i) out(i, j) = 0.0;
      continue;
    }
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dv = m(i, j) - mean;
      var += dv * dv;
    }
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) out(i, j) = (m(i, j) - mean) / sd;
  }
  return out;
}

}  // namespace specdb
