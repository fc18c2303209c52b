// Command-line front end: clustering, compression, sweeps and demos.
//
// Exit codes: 0 success, 1 usage error, 2 data/format error,
// 3 numerical failure (eigensolver non-convergence).

#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "specdb/specdb.hpp"

namespace {

using namespace specdb;

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct InputArgs {
  std::string path;
  bool skip_header = false;
  bool label_column = false;
  std::string truth_path;
};

void add_input_options(CLI::App* cmd, InputArgs& in, bool with_truth) {
  cmd->add_option("--input", in.path, "CSV file or IDX image file")->required();
  cmd->add_flag("--skip-header", in.skip_header, "Ignore the first CSV line");
  cmd->add_flag("--label-column", in.label_column, "Last CSV column holds class ids");
  if (with_truth) cmd->add_option("--truth", in.truth_path, "Class ids: one per line, or an IDX label file");
}

LabeledData load_input(const InputArgs& in) {
  LabeledData out;
  if (is_idx_file(in.path)) {
    out.data = load_idx_images(in.path);
  } else {
    out = load_csv(in.path, {in.label_column, in.skip_header});
  }
  if (!in.truth_path.empty()) {
    out.truth = is_idx_file(in.truth_path) ? load_idx_labels(in.truth_path) : load_label_csv(in.truth_path);
  }
  if (out.truth && out.truth->size() != out.data.rows()) {
    throw ConsistencyError(std::to_string(out.data.rows()) + " samples but " + std::to_string(out.truth->size()) +
                           " labels");
  }
  return out;
}

Weighting parse_weighting(const std::string& s) { return s == "unit" ? Weighting::unit : Weighting::gaussian; }

void print_summary(const ClusterLabels& labels, const std::optional<GroundTruth>& truth) {
  std::cout << "clusters " << labels.n_clusters << " noise " << labels.noise_count();
  if (truth) std::cout << " accuracy " << format_real(clustering_accuracy(labels, *truth));
  std::cout << '\n';
}

std::vector<double> parse_ratios(const std::string& text) {
  std::vector<double> ratios;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const auto v = specdb::detail::parse_real(specdb::detail::trim(std::string_view(text).substr(start, comma - start)));
    if (!v) throw std::invalid_argument("--ratios: cannot parse '" + text + "'");
    ratios.push_back(*v);
    start = comma + 1;
  }
  return ratios;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral data compression for DBSCAN"};
  app.require_subcommand(1);

  InputArgs in;
  double eps = 0.0;
  std::size_t min_pts = 0;
  double ratio = 1.0;
  std::size_t knn_k = 10;
  std::size_t r = 25;
  std::uint64_t seed = 0;
  std::string weighting = "gaussian";
  std::string out_path;

  // dbscan
  auto* c_dbscan = app.add_subcommand("dbscan", "Exact DBSCAN on the input");
  add_input_options(c_dbscan, in, false);
  c_dbscan->add_option("--eps", eps, "Neighbourhood radius")->required();
  c_dbscan->add_option("--min-pts", min_pts, "Core threshold, counting the point itself")->required();
  c_dbscan->add_option("--labels", in.truth_path, "Reference class ids for an accuracy report");
  c_dbscan->add_option("--out", out_path, "Write cluster labels here");

  // compress
  std::string out_data;
  std::string out_map;
  auto* c_compress = app.add_subcommand("compress", "Spectral compression to pseudo-samples");
  add_input_options(c_compress, in, false);
  c_compress->add_option("--ratio", ratio, "Compression ratio (> 1)")->required();
  c_compress->add_option("--k", knn_k, "kNN graph degree")->capture_default_str();
  c_compress->add_option("--r", r, "Embedding dimension")->capture_default_str();
  c_compress->add_option("--seed", seed, "Eigensolver seed")->capture_default_str();
  c_compress->add_option("--weighting", weighting, "gaussian or unit")
      ->check(CLI::IsMember({"gaussian", "unit"}))
      ->capture_default_str();
  c_compress->add_option("--out-data", out_data, "Pseudo-samples CSV")->required();
  c_compress->add_option("--out-map", out_map, "Hierarchy map file")->required();

  // pipeline
  bool weighted = false;
  std::string record_path;
  auto* c_pipeline = app.add_subcommand("pipeline", "Compress, cluster, and project labels back");
  add_input_options(c_pipeline, in, true);
  c_pipeline->add_option("--ratio", ratio, "Compression ratio (1 = plain DBSCAN)")->required();
  c_pipeline->add_option("--eps", eps, "Neighbourhood radius")->required();
  c_pipeline->add_option("--min-pts", min_pts, "Core threshold")->required();
  c_pipeline->add_option("--k", knn_k, "kNN graph degree")->capture_default_str();
  c_pipeline->add_option("--r", r, "Embedding dimension")->capture_default_str();
  c_pipeline->add_option("--seed", seed, "Eigensolver seed")->capture_default_str();
  c_pipeline->add_flag("--weighted-minpts", weighted, "Pseudo-samples count with their aggregate size");
  c_pipeline->add_option("--out", out_path, "Labels for the original points")->required();
  c_pipeline->add_option("--record", record_path, "Also write the benchmark record as CSV");

  // sweep
  std::string ratios_text = "1,2,5,10";
  std::string out_csv;
  std::string dataset_name = "data";
  double eps_percentile = 95.0;
  auto* c_sweep = app.add_subcommand("sweep", "Benchmark the pipeline over several ratios");
  add_input_options(c_sweep, in, true);
  c_sweep->add_option("--ratios", ratios_text, "Comma-separated ratios")->capture_default_str();
  c_sweep->add_option("--eps", eps, "Neighbourhood radius (default: k-distance suggestion)");
  c_sweep->add_option("--eps-percentile", eps_percentile, "Percentile used when --eps is omitted")
      ->capture_default_str();
  c_sweep->add_option("--min-pts", min_pts, "Core threshold")->required();
  c_sweep->add_option("--k", knn_k, "kNN graph degree")->capture_default_str();
  c_sweep->add_option("--r", r, "Embedding dimension")->capture_default_str();
  c_sweep->add_option("--seed", seed, "Eigensolver seed")->capture_default_str();
  c_sweep->add_flag("--weighted-minpts", weighted, "Pseudo-samples count with their aggregate size");
  c_sweep->add_option("--dataset-name", dataset_name, "Value of the dataset column")->capture_default_str();
  c_sweep->add_option("--out-csv", out_csv, "Benchmark CSV")->required();

  // kdist
  double percentile = 95.0;
  auto* c_kdist = app.add_subcommand("kdist", "Suggest eps from the k-distance distribution");
  add_input_options(c_kdist, in, false);
  c_kdist->add_option("--k", knn_k, "Neighbour rank")->required();
  c_kdist->add_option("--percentile", percentile, "Percentile in (0, 100]")->required();

  // demo
  std::string kind = "two-circles";
  std::size_t n = 500;
  double noise = 0.05;
  double factor = 0.5;
  std::string out_dir;
  auto* c_demo = app.add_subcommand("demo", "k-means on raw versus spectral coordinates");
  c_demo->add_option("--kind", kind, "two-moons or two-circles")
      ->check(CLI::IsMember({"two-moons", "two-circles"}))
      ->required();
  c_demo->add_option("--n", n, "Number of points")->capture_default_str();
  c_demo->add_option("--seed", seed, "Random seed")->capture_default_str();
  c_demo->add_option("--noise", noise, "Gaussian coordinate noise")->capture_default_str();
  c_demo->add_option("--factor", factor, "Inner circle radius")->capture_default_str();
  c_demo->add_option("--out-dir", out_dir, "Output directory")->required();

  // project
  std::string map_path;
  std::string labels_path;
  auto* c_project = app.add_subcommand("project", "Map pseudo-sample labels back to original points");
  c_project->add_option("--map", map_path, "Hierarchy map file from `compress`")->required();
  c_project->add_option("--labels", labels_path, "Labels of the pseudo-samples")->required();
  c_project->add_option("--out", out_path, "Labels of the original points")->required();

  // generate
  bool with_labels = false;
  std::size_t n_features = 16;
  std::size_t n_classes = 10;
  auto* c_generate = app.add_subcommand("generate", "Write a synthetic data set as CSV");
  c_generate->add_option("--kind", kind, "two-moons, two-circles or blobs")
      ->check(CLI::IsMember({"two-moons", "two-circles", "blobs"}))
      ->required();
  c_generate->add_option("--n", n, "Number of points")->required();
  c_generate->add_option("--noise", noise, "Noise level (blob spread for blobs)")->capture_default_str();
  c_generate->add_option("--factor", factor, "Inner circle radius")->capture_default_str();
  c_generate->add_option("--features", n_features, "Blob dimension")->capture_default_str();
  c_generate->add_option("--classes", n_classes, "Blob count")->capture_default_str();
  c_generate->add_option("--seed", seed, "Random seed")->capture_default_str();
  c_generate->add_flag("--with-labels", with_labels, "Append the class id as a last column");
  c_generate->add_option("--out", out_path, "Output CSV")->required();

  // graph / embed
  auto* c_graph = app.add_subcommand("graph", "Write the kNN graph as an edge list");
  add_input_options(c_graph, in, false);
  c_graph->add_option("--k", knn_k, "kNN graph degree")->capture_default_str();
  c_graph->add_option("--weighting", weighting, "gaussian or unit")
      ->check(CLI::IsMember({"gaussian", "unit"}))
      ->capture_default_str();
  c_graph->add_option("--out", out_path, "Edge list file")->required();

  auto* c_embed = app.add_subcommand("embed", "Write the spectral embedding as CSV");
  add_input_options(c_embed, in, false);
  c_embed->add_option("--k", knn_k, "kNN graph degree")->capture_default_str();
  c_embed->add_option("--r", r, "Embedding dimension")->capture_default_str();
  c_embed->add_option("--seed", seed, "Eigensolver seed")->capture_default_str();
  c_embed->add_option("--out", out_path, "Embedding CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (c_dbscan->parsed()) {
      const auto input = load_input(in);
      const ClusterLabels labels = dbscan(input.data, {eps, min_pts});
      if (!out_path.empty()) write_labels(out_path, labels);
      print_summary(labels, input.truth);
    } else if (c_compress->parsed()) {
      const auto input = load_input(in);
      const auto h = compress_data(input.data, ratio, knn_k, r, seed, parse_weighting(weighting));
      write_csv(out_data, h.pseudo_samples);
      write_hierarchy(out_map, h);
      std::cout << "compressed " << h.n_original << " -> " << h.n_final << " in " << h.passes.size() << " passes\n";
    } else if (c_pipeline->parsed()) {
      const auto input = load_input(in);
      PipelineConfig cfg;
      cfg.ratio = ratio;
      cfg.knn_k = knn_k;
      cfg.r = r;
      cfg.dbscan = {eps, min_pts};
      cfg.weighted_min_pts = weighted;
      cfg.seed = seed;
      const auto res = run_pipeline(input.data, input.truth ? &*input.truth : nullptr, cfg);
      write_labels(out_path, res.labels);
      const BenchmarkRecord records[] = {res.record};
      if (!record_path.empty()) write_benchmark_csv(record_path, records);
      write_benchmark_csv(std::cout, records);
    } else if (c_sweep->parsed()) {
      const auto input = load_input(in);
      PipelineConfig cfg;
      cfg.dataset_name = dataset_name;
      cfg.knn_k = knn_k;
      cfg.r = r;
      if (c_sweep->count("--eps") == 0) {
        if (min_pts < 2) throw std::invalid_argument("sweep: --min-pts must be >= 2 to suggest eps");
        eps = suggest_eps(input.data, min_pts - 1, eps_percentile);
      }
      cfg.dbscan = {eps, min_pts};
      cfg.weighted_min_pts = weighted;
      cfg.seed = seed;
      const auto ratios = parse_ratios(ratios_text);
      const auto records = benchmark_sweep(input.data, input.truth ? &*input.truth : nullptr, ratios, cfg, out_csv);
      write_benchmark_csv(std::cout, records);
    } else if (c_kdist->parsed()) {
      const auto input = load_input(in);
      std::cout << format_real(suggest_eps(input.data, knn_k, percentile)) << '\n';
    } else if (c_demo->parsed()) {
      DemoConfig cfg;
      cfg.kind = kind == "two-moons" ? DemoKind::two_moons : DemoKind::two_circles;
      cfg.n = n;
      cfg.noise_sigma = noise;
      cfg.circle_factor = factor;
      cfg.seed = seed;
      const auto res = spectral_vs_raw_demo(cfg, out_dir);
      std::cout << "raw " << format_real(res.raw_accuracy) << "\nspectral " << format_real(res.spectral_accuracy)
                << '\n';
    } else if (c_project->parsed()) {
      const auto h = read_hierarchy(map_path);
      const auto labels = project_labels(h, read_labels(labels_path));
      write_labels(out_path, labels);
    } else if (c_generate->parsed()) {
      std::pair<DataMatrix, GroundTruth> gen;
      if (kind == "two-moons") {
        gen = make_two_moons(n, noise, seed);
      } else if (kind == "two-circles") {
        gen = make_two_circles(n, noise, factor, seed);
      } else {
        gen = make_blobs(n, n_features, n_classes, noise, 10.0, seed);
      }
      std::ofstream out(out_path, std::ios::binary);
      if (!out) throw IoError("cannot write " + out_path);
      for (std::size_t i = 0; i < gen.first.rows(); ++i) {
        const auto row = gen.first.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << format_real(row[j]);
        if (with_labels) out << ',' << gen.second.labels[i];
        out << '\n';
      }
    } else if (c_graph->parsed()) {
      const auto input = load_input(in);
      write_edge_list(out_path, build_knn_graph(input.data, knn_k, parse_weighting(weighting)));
    } else if (c_embed->parsed()) {
      const auto input = load_input(in);
      EmbedOptions opts;
      opts.lanczos.seed = seed;
      write_embedding_csv(out_path, embed(laplacian(build_knn_graph(input.data, knn_k)), r, opts));
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::out_of_range& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
