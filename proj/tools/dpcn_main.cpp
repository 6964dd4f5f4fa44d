#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <set>
#include <string>
#include <vector>

#include "dpcn/data.hpp"
#include "dpcn/eval.hpp"
#include "dpcn/hierarchy.hpp"
#include "dpcn/model_io.hpp"
#include "dpcn/rng.hpp"

namespace {

using dpcn::Index;
using dpcn::Real;
using nlohmann::json;

struct GlobalOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;
  bool verbose = false;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream is(path);
  if (!is) throw dpcn::IoError("cannot open config " + path);
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw dpcn::ParseError(std::string("config: ") + e.what(), e.byte);
  }
}

// Section of the config for one subcommand; top-level keys also apply.
json section(const json& config, const std::string& name) {
  json s = config.contains(name) ? config.at(name) : json::object();
  if (!s.is_object()) throw dpcn::ParameterError("config: '" + name + "' must be an object");
  return s;
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw dpcn::ParameterError("config: bad value for '" + key + "'");
  }
}

std::uint64_t resolve_seed(const GlobalOpts& g, const json& config) {
  if (g.seed_set) return g.seed;
  return get_or<std::uint64_t>(config, "seed", 0);
}

dpcn::HyperParams hyper_from(const json& j) {
  dpcn::HyperParams h;
  h.lambda = get_or(j, "lambda", h.lambda);
  h.gamma0 = get_or(j, "gamma0", h.gamma0);
  h.beta = get_or(j, "beta", h.beta);
  h.mu = get_or(j, "mu", h.mu);
  h.eta = get_or(j, "eta", h.eta);
  h.L0_x = get_or(j, "L0_x", h.L0_x);
  h.L0_u = get_or(j, "L0_u", h.L0_u);
  h.max_iters = get_or(j, "max_iters", h.max_iters);
  h.tol = get_or(j, "tol", h.tol);
  h.learn_rate = get_or(j, "learn_rate", h.learn_rate);
  h.batch_size = get_or(j, "batch_size", h.batch_size);
  h.param_smooth = get_or(j, "param_smooth", h.param_smooth);
  h.epochs = get_or(j, "epochs", h.epochs);
  h.validate();
  return h;
}

json hyper_dump(const dpcn::HyperParams& h) {
  return json{{"lambda", h.lambda},     {"gamma0", h.gamma0},
              {"beta", h.beta},         {"mu", h.mu},
              {"eta", h.eta},           {"L0_x", h.L0_x},
              {"L0_u", h.L0_u},         {"max_iters", h.max_iters},
              {"tol", h.tol},           {"learn_rate", h.learn_rate},
              {"batch_size", h.batch_size}, {"param_smooth", h.param_smooth},
              {"epochs", h.epochs}};
}

void log_config(const std::string& cmd, const json& resolved) {
  std::cout << "config " << cmd << ": " << resolved.dump() << '\n';
}

// ---- generate ----------------------------------------------------------

struct GenerateOpts {
  int frames_per_class = 100;
  std::vector<int> classes = {0, 1, 2};
  int frame_rows = 32;
  int frame_cols = 32;
  int shape_kinds = 3;
  Real noise_mean = 1.5;
  std::string clean_path = "clean.dpcv";
  std::string noisy_path = "noisy.dpcv";
  std::string labels_path = "labels.csv";
};

int run_generate(const GlobalOpts& g, const json& config, GenerateOpts o,
                 const std::set<std::string>& overridden) {
  const json s = section(config, "generate");
  if (!overridden.count("frames-per-class"))
    o.frames_per_class = get_or(s, "frames_per_class", o.frames_per_class);
  if (!overridden.count("noise-mean")) o.noise_mean = get_or(s, "noise_mean", o.noise_mean);
  if (!overridden.count("clean-path")) o.clean_path = get_or(s, "clean_path", o.clean_path);
  if (!overridden.count("noisy-path")) o.noisy_path = get_or(s, "noisy_path", o.noisy_path);
  if (!overridden.count("labels-path"))
    o.labels_path = get_or(s, "labels_path", o.labels_path);
  o.classes = get_or(s, "classes", o.classes);
  o.frame_rows = get_or(s, "frame_rows", o.frame_rows);
  o.frame_cols = get_or(s, "frame_cols", o.frame_cols);
  o.shape_kinds = get_or(s, "shape_kinds", o.shape_kinds);
  const std::uint64_t seed = resolve_seed(g, config);

  log_config("generate",
             json{{"seed", seed},
                  {"frames_per_class", o.frames_per_class},
                  {"classes", o.classes},
                  {"frame_rows", o.frame_rows},
                  {"frame_cols", o.frame_cols},
                  {"shape_kinds", o.shape_kinds},
                  {"noise_mean", o.noise_mean},
                  {"clean_path", o.clean_path},
                  {"noisy_path", o.noisy_path},
                  {"labels_path", o.labels_path}});

  const dpcn::Video clean = dpcn::generate_shapes_video(
      o.shape_kinds, o.frame_rows, o.frame_cols, o.frames_per_class, o.classes,
      dpcn::split_seed(seed, 11));
  dpcn::save_video(clean, o.clean_path);
  dpcn::save_labels_csv(clean, o.labels_path);
  const dpcn::Video noisy =
      dpcn::add_structured_noise(clean, o.noise_mean, dpcn::split_seed(seed, 12));
  dpcn::save_video(noisy, o.noisy_path);
  std::cout << "generate: wrote " << clean.frames.size() << " frames to "
            << o.clean_path << ", " << o.noisy_path << ", labels to "
            << o.labels_path << '\n';
  return 0;
}

// ---- train -------------------------------------------------------------

dpcn::Topology topology_from(const json& j) {
  dpcn::Topology t;
  t.frame_rows = get_or(j, "frame_rows", 32);
  t.frame_cols = get_or(j, "frame_cols", 32);
  t.patch_size = get_or(j, "patch_size", 12);
  if (j.contains("layers")) {
    for (const json& lj : j.at("layers")) {
      dpcn::LayerTopology lt;
      lt.group_rows = get_or(lj, "group_rows", 1);
      lt.group_cols = get_or(lj, "group_cols", 1);
      lt.child_stride = get_or(lj, "child_stride", 0);
      lt.grid_rows = get_or(lj, "grid_rows", 1);
      lt.grid_cols = get_or(lj, "grid_cols", 1);
      lt.block_stride = get_or(lj, "block_stride", 0);
      t.layers.push_back(lt);
    }
  }
  return t;
}

// Two-layer default covering a 32 x 32 frame with 12 x 12 patches.
void default_architecture(dpcn::Topology& topo, std::vector<dpcn::LayerDims>& dims) {
  topo.frame_rows = 32;
  topo.frame_cols = 32;
  topo.patch_size = 12;
  topo.layers = {{2, 2, 8, 2, 2, 12}, {2, 2, 12, 1, 1, 0}};
  dims = {{100, 144, 40, 4}, {60, 40, 3, 4}};
}

int run_train(const GlobalOpts& g, const json& config, std::string video_path,
              std::string model_path, int layers_flag) {
  const json s = section(config, "train");
  if (video_path.empty()) video_path = get_or<std::string>(s, "video_path", "clean.dpcv");
  if (model_path.empty()) model_path = get_or<std::string>(s, "model_path", "model.json");

  dpcn::Topology topo;
  std::vector<dpcn::LayerDims> dims;
  if (s.contains("topology")) {
    topo = topology_from(s.at("topology"));
    if (!s.contains("dims"))
      throw dpcn::ParameterError("config: train.topology requires train.dims");
    for (const json& dj : s.at("dims")) {
      dpcn::LayerDims d;
      d.K = get_or<Index>(dj, "K", 0);
      d.P = get_or<Index>(dj, "P", 0);
      d.D = get_or<Index>(dj, "D", 0);
      d.N = get_or<Index>(dj, "N", 1);
      dims.push_back(d);
    }
  } else {
    default_architecture(topo, dims);
  }

  std::vector<dpcn::HyperParams> hypers;
  if (s.contains("hyper") && s.at("hyper").is_array()) {
    for (const json& hj : s.at("hyper")) hypers.push_back(hyper_from(hj));
  } else {
    const json hj = s.contains("hyper") ? s.at("hyper") : json::object();
    hypers.assign(topo.layers.size(), hyper_from(hj));
  }

  const int layers = layers_flag > 0 ? layers_flag : get_or(s, "layers", 0);
  if (layers > 0) {
    if (layers > static_cast<int>(topo.layers.size()))
      throw dpcn::ParameterError("config: --layers exceeds topology depth");
    topo.layers.resize(static_cast<std::size_t>(layers));
    dims.resize(static_cast<std::size_t>(layers));
    hypers.resize(static_cast<std::size_t>(layers));
  }
  if (dims.size() != topo.layers.size() || hypers.size() != topo.layers.size())
    throw dpcn::ParameterError("config: train dims/hyper must match topology depth");

  const bool normalize = get_or(s, "contrast_normalize", false);
  const std::uint64_t seed = resolve_seed(g, config);

  json hyper_log = json::array();
  for (const auto& h : hypers) hyper_log.push_back(hyper_dump(h));
  log_config("train", json{{"seed", seed},
                           {"video_path", video_path},
                           {"model_path", model_path},
                           {"layers", topo.layers.size()},
                           {"contrast_normalize", normalize},
                           {"hyper", hyper_log}});

  dpcn::Video video = dpcn::load_video(video_path);
  if (normalize) video = dpcn::contrast_normalize(video);

  dpcn::Network net = dpcn::train_network(video, topo, dims, hypers,
                                          dpcn::split_seed(seed, 21), &std::cout);
  dpcn::save_model(net, model_path);
  std::cout << "train: wrote model to " << model_path << '\n';
  return 0;
}

// ---- infer -------------------------------------------------------------

int run_infer(const GlobalOpts& g, const json& config, std::string model_path,
              std::string video_path, std::string causes_path, int top_down_flag,
              std::string states_path) {
  const json s = section(config, "infer");
  if (model_path.empty()) model_path = get_or<std::string>(s, "model_path", "model.json");
  if (video_path.empty()) video_path = get_or<std::string>(s, "video_path", "clean.dpcv");
  if (causes_path.empty())
    causes_path = get_or<std::string>(s, "causes_path", "causes.csv");
  if (states_path.empty()) states_path = get_or<std::string>(s, "states_path", "");
  const bool top_down =
      top_down_flag >= 0 ? top_down_flag != 0 : get_or(s, "top_down", false);
  const bool normalize = get_or(s, "contrast_normalize", false);

  log_config("infer", json{{"model_path", model_path},
                           {"video_path", video_path},
                           {"causes_path", causes_path},
                           {"states_path", states_path},
                           {"top_down", top_down},
                           {"contrast_normalize", normalize}});
  (void)g;

  dpcn::Network net = dpcn::load_model(model_path);
  dpcn::Video video = dpcn::load_video(video_path);
  if (normalize) video = dpcn::contrast_normalize(video);

  std::ofstream causes(causes_path);
  if (!causes) throw dpcn::IoError("infer: cannot open " + causes_path);
  const Index width =
      net.layers.back().params.D * static_cast<Index>(net.layers.back().blocks.size());
  for (Index j = 0; j < width; ++j) causes << (j ? "," : "") << 'u' << j;
  causes << '\n';

  std::ofstream states;
  if (!states_path.empty()) {
    states.open(states_path);
    if (!states) throw dpcn::IoError("infer: cannot open " + states_path);
    states << "frame,layer,block,member,index,value\n";
  }

  net.reset_context();
  char buf[64];
  for (std::size_t t = 0; t < video.frames.size(); ++t) {
    const auto result = dpcn::infer_frame(net, video.frames[t], top_down);
    const auto& top = result.back();
    bool first = true;
    for (const dpcn::LayerState& st : top)
      for (Index j = 0; j < st.u.size(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.12g", st.u(j));
        causes << (first ? "" : ",") << buf;
        first = false;
      }
    causes << '\n';
    if (states.is_open())
      for (std::size_t l = 0; l < result.size(); ++l)
        for (std::size_t b = 0; b < result[l].size(); ++b)
          for (std::size_t n = 0; n < result[l][b].x.size(); ++n)
            for (Index j = 0; j < result[l][b].x[n].size(); ++j) {
              std::snprintf(buf, sizeof(buf), "%.12g", result[l][b].x[n](j));
              states << t << ',' << l << ',' << b << ',' << n << ',' << j << ','
                     << buf << '\n';
            }
  }
  if (!causes) throw dpcn::IoError("infer: write failed for " + causes_path);
  std::cout << "infer: wrote " << video.frames.size() << " rows to " << causes_path
            << '\n';
  return 0;
}

// ---- benchmark ---------------------------------------------------------

int run_benchmark(const GlobalOpts& g, const json& config, int runs_flag,
                  std::string csv_path) {
  const json s = section(config, "benchmark");
  dpcn::SimSpec base;
  base.K = get_or<Index>(s, "K", 100);
  base.active = get_or<Index>(s, "active", 10);
  base.T = get_or(s, "T", 80);
  base.obs_noise_var = get_or(s, "obs_noise_var", 0.01);
  base.switch_mean = get_or(s, "switch_mean", 2.0);
  base.seed = resolve_seed(g, config);

  std::vector<Index> grid =
      get_or(s, "P_grid", std::vector<Index>{30, 40, 50, 60, 70, 80, 90, 100});
  const int runs = runs_flag > 0 ? runs_flag : get_or(s, "runs", 20);
  if (csv_path.empty())
    csv_path = get_or<std::string>(s, "csv_path", "benchmark.csv");

  dpcn::HyperParams hyper =
      hyper_from(s.contains("hyper") ? s.at("hyper") : json::object());
  if (!s.contains("hyper")) {
    // Estimation-only defaults: noise-scaled sparsity, gentle temporal pull.
    hyper.gamma0 = 0.05;
    hyper.lambda = 0.05;
    hyper.max_iters = 400;
    hyper.tol = 1e-6;
  }

  log_config("benchmark", json{{"seed", base.seed},
                               {"K", base.K},
                               {"active", base.active},
                               {"T", base.T},
                               {"obs_noise_var", base.obs_noise_var},
                               {"switch_mean", base.switch_mean},
                               {"P_grid", grid},
                               {"runs", runs},
                               {"csv_path", csv_path},
                               {"threads", g.threads},
                               {"hyper", hyper_dump(hyper)}});

  const dpcn::BenchResult result =
      dpcn::benchmark_state_estimation(base, grid, runs, hyper, g.threads);
  // Timings go to the log; the CSV stays a pure function of the seed.
  dpcn::write_benchmark_csv(result, csv_path, false);
  std::cout << "benchmark: kalman process_var " << result.kalman_process_var << '\n';
  for (const dpcn::BenchCell& c : result.cells)
    std::cout << "benchmark: " << c.method << " P=" << c.P << " rmse "
              << c.rmse_mean() << " +- " << c.rmse_std() << " (" << c.seconds
              << " s)\n";
  std::cout << "benchmark: wrote " << csv_path << '\n';
  return 0;
}

// ---- rf ----------------------------------------------------------------

std::vector<int> parse_units(const std::string& text, Index count) {
  std::vector<int> units;
  if (text == "all") {
    for (Index d = 0; d < count; ++d) units.push_back(static_cast<int>(d));
    return units;
  }
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      units.push_back(std::stoi(text));
    } else {
      const int lo = std::stoi(text.substr(0, dots));
      const int hi = std::stoi(text.substr(dots + 2));
      if (hi < lo) throw dpcn::ParameterError("rf: empty unit range " + text);
      for (int u = lo; u <= hi; ++u) units.push_back(u);
    }
  } catch (const std::logic_error&) {
    throw dpcn::ParameterError("rf: cannot parse units '" + text + "'");
  }
  return units;
}

int run_rf(const json& config, std::string model_path, int layer_flag,
           std::string units_text, std::string out_dir) {
  const json s = section(config, "rf");
  if (model_path.empty()) model_path = get_or<std::string>(s, "model_path", "model.json");
  const int layer = layer_flag > 0 ? layer_flag : get_or(s, "layer", 1);
  if (units_text.empty()) units_text = get_or<std::string>(s, "units", "all");
  if (out_dir.empty()) out_dir = get_or<std::string>(s, "out_dir", "rf");

  log_config("rf", json{{"model_path", model_path},
                        {"layer", layer},
                        {"units", units_text},
                        {"out_dir", out_dir}});

  dpcn::Network net = dpcn::load_model(model_path);
  if (layer < 1 || layer > static_cast<int>(net.layers.size()))
    throw dpcn::IndexError("rf: layer " + std::to_string(layer) + " out of range");
  const std::vector<int> units =
      parse_units(units_text, net.layers[static_cast<std::size_t>(layer - 1)].params.D);
  dpcn::save_receptive_fields_pgm(net, layer - 1, units, out_dir);
  std::cout << "rf: wrote " << units.size() << " files to " << out_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep predictive coding networks: data, training, inference, benchmarks"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "JSON config file");
  auto* seed_opt = app.add_option("--seed", g.seed, "Master seed (overrides config)");
  app.add_option("--threads", g.threads, "Worker thread cap")
      ->check(CLI::PositiveNumber);
  app.add_flag("--verbose", g.verbose, "Extra logging");

  auto* gen = app.add_subcommand("generate", "Write shapes videos and labels");
  GenerateOpts go;
  auto* g_nm = gen->add_option("--noise-mean", go.noise_mean, "Poisson mean of noise glyphs");
  auto* g_fpc = gen->add_option("--frames-per-class", go.frames_per_class,
                                "Frames per class segment");
  auto* g_cp = gen->add_option("--clean-path", go.clean_path, "Clean video output");
  auto* g_np = gen->add_option("--noisy-path", go.noisy_path, "Corrupted video output");
  auto* g_lp = gen->add_option("--labels-path", go.labels_path, "Label CSV output");

  auto* train = app.add_subcommand("train", "Train a layered model on a video");
  std::string train_video, train_model;
  int train_layers = 0;
  train->add_option("--video", train_video, "Input DPCV video");
  train->add_option("--model", train_model, "Model JSON output");
  train->add_option("--layers", train_layers, "Train only the first N layers");

  auto* infer = app.add_subcommand("infer", "Infer causes for a video");
  std::string infer_model, infer_video, infer_causes, infer_states;
  bool td_on = false, td_off = false;
  infer->add_option("--model", infer_model, "Model JSON");
  infer->add_option("--video", infer_video, "Input DPCV video");
  infer->add_option("--causes", infer_causes, "Cause CSV output");
  infer->add_option("--states", infer_states, "Optional state dump CSV");
  infer->add_flag("--top-down", td_on, "Use top-down predictions during inference");
  infer->add_flag("--no-top-down", td_off, "Force bottom-up-only inference");

  auto* bench = app.add_subcommand("benchmark", "State-estimation benchmark grid");
  int bench_runs = 0;
  std::string bench_csv;
  bench->add_option("--runs", bench_runs, "Runs per grid point");
  bench->add_option("--csv", bench_csv, "Benchmark CSV output");

  auto* rf = app.add_subcommand("rf", "Export receptive fields as PGM");
  std::string rf_model, rf_units, rf_dir;
  int rf_layer = 0;
  rf->add_option("--model", rf_model, "Model JSON");
  rf->add_option("--layer", rf_layer, "Layer number (1-based)");
  rf->add_option("--units", rf_units, "Units: all, N, or A..B");
  rf->add_option("--out-dir", rf_dir, "Output directory");

  for (CLI::App* sub : {gen, train, infer, bench, rf}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  g.seed_set = seed_opt->count() > 0;

  json config;
  try {
    config = load_config(g.config_path);
    if (!config.is_object())
      throw dpcn::ParameterError("config: top level must be an object");
  } catch (const dpcn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (gen->parsed()) {
      std::set<std::string> overridden;
      if (g_nm->count()) overridden.insert("noise-mean");
      if (g_fpc->count()) overridden.insert("frames-per-class");
      if (g_cp->count()) overridden.insert("clean-path");
      if (g_np->count()) overridden.insert("noisy-path");
      if (g_lp->count()) overridden.insert("labels-path");
      return run_generate(g, config, go, overridden);
    }
    if (train->parsed())
      return run_train(g, config, train_video, train_model, train_layers);
    if (infer->parsed()) {
      const int infer_td = td_on ? 1 : (td_off ? 0 : -1);
      return run_infer(g, config, infer_model, infer_video, infer_causes, infer_td,
                       infer_states);
    }
    if (bench->parsed()) return run_benchmark(g, config, bench_runs, bench_csv);
    if (rf->parsed()) return run_rf(config, rf_model, rf_layer, rf_units, rf_dir);
  } catch (const dpcn::ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const dpcn::TopologyError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const dpcn::GeometryError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const dpcn::IndexError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const dpcn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
