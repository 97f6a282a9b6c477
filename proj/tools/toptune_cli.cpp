// toptune: train, evaluate and compare top-tuning classifiers from the shell.
//
// Exit codes: 0 ok, 2 usage/validation/format/io error, 3 numeric failure,
// 1 anything unexpected.

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "toptune/toptune.hpp"

using nlohmann::json;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

// --config FILE: a JSON object whose keys mirror the long flag names. Keys at
// the top level apply to the command being run; an object keyed by a command
// name ("grid-cv": {...}) applies to that command only. Unknown keys are an
// error. Flags given on the command line win.
class JsonConfig : public CLI::Config {
 public:
  JsonConfig(std::string active, const CLI::App* root) : active_(std::move(active)), root_(root) {}

  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j;
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames()[0];
      if (opt->count() > 0) {
        j[name] = opt->results().size() == 1 ? json(opt->results()[0]) : json(opt->results());
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    return j.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json doc;
    try {
      doc = json::parse(input);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    if (active_.empty()) return items;
    const json* section = doc.contains(active_) && doc[active_].is_object() ? &doc[active_] : nullptr;
    for (const auto& [key, value] : doc.items()) {
      if (value.is_object()) continue;
      if (section && section->contains(key)) continue;
      items.push_back(item(key, value));
    }
    if (section)
      for (const auto& [key, value] : section->items()) items.push_back(item(key, value));
    return items;
  }

 private:
  CLI::ConfigItem item(const std::string& key, const json& value) const {
    const CLI::App* sub = root_->get_subcommand_no_throw(active_);
    if (sub == nullptr || sub->get_option_no_throw("--" + key) == nullptr) {
      throw CLI::ConversionError("config file: unknown key '" + key + "' for " + active_);
    }
    CLI::ConfigItem it;
    it.parents = {active_};
    it.name = key;
    auto text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_array()) {
      for (const auto& v : value) it.inputs.push_back(text(v));
    } else {
      it.inputs.push_back(text(value));
    }
    return it;
  }

  std::string active_;
  const CLI::App* root_;
};

// The stage that was running when an error escaped, for the message.
std::string g_stage = "startup";

void stage(const std::string& name) { g_stage = name; }

json log_json(const toptune::TrainingLog& log) { return toptune::training_log_json(log); }

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
  } else {
    toptune::write_file_bytes(path, text);
  }
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string features;
  std::string out;
  std::string kind = "nystrom";
  double gamma = 100.0;
  double lambda = 1e-5;
  double alpha = 0.1;
  std::size_t centers = 0;
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  double tol = 1e-8;
  bool standardize = false;
  std::size_t exact_cap = 4096;
};

int run_train(const TrainArgs& a) {
  stage("load features");
  const auto loaded = toptune::read_feature_file(a.features);
  toptune::FeatureSet data = loaded.features;
  std::optional<toptune::Standardizer> standardizer;
  if (a.standardize) {
    stage("standardize");
    standardizer = toptune::Standardizer::fit(data.promoted());
    data.features = standardizer->apply(data.promoted()).cast<float>();
  }

  stage("train");
  toptune::Model model;
  json line = {{"command", "train"}, {"dataset", loaded.manifest.dataset_name}, {"kind", a.kind},
               {"n", data.size()}, {"d", data.dim()}, {"C", data.num_classes}};
  if (a.kind == "nystrom") {
    toptune::SolverOptions opts;
    opts.num_centers = a.centers;
    opts.seed = a.seed;
    opts.max_iter = a.max_iter;
    opts.tol = a.tol;
    auto m = toptune::fit_nystrom(data, toptune::KernelParams{a.gamma}, a.lambda, opts);
    line["gamma"] = a.gamma;
    line["lambda"] = a.lambda;
    line["M"] = m.centers.rows();
    line["training_log"] = log_json(m.log);
    model = std::move(m);
  } else if (a.kind == "exact") {
    toptune::ExactOptions opts;
    opts.max_samples = a.exact_cap;
    auto m = toptune::fit_exact(data, toptune::KernelParams{a.gamma}, a.lambda, opts);
    line["gamma"] = a.gamma;
    line["lambda"] = a.lambda;
    line["training_log"] = log_json(m.log);
    model = std::move(m);
  } else {
    auto m = toptune::fit_linear_ridge(data, a.alpha);
    line["alpha"] = a.alpha;
    line["training_log"] = log_json(m.log);
    model = std::move(m);
  }

  const bool converged = line["training_log"]["converged"].get<bool>();
  if (!converged) {
    std::cerr << "toptune train: warning: solver stopped before reaching tol=" << a.tol
              << " (see training_log)\n";
  }

  stage("write model");
  toptune::save_model(model, a.out, standardizer);
  line["model"] = a.out;
  std::cout << line.dump() << std::endl;
  return 0;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string model;
  std::string features;
  std::string out;
};

int run_predict(const PredictArgs& a) {
  stage("load model");
  const toptune::SavedModel model = toptune::load_model(a.model);
  stage("load features");
  const auto loaded = toptune::read_feature_file(a.features);
  stage("predict");
  const auto labels = toptune::predict_labels(toptune::predict_scores(model, loaded.features.promoted()));
  json result = {{"command", "predict"},
                 {"dataset", loaded.manifest.dataset_name},
                 {"n", labels.size()},
                 {"accuracy", toptune::accuracy(labels, loaded.features.labels)}};
  if (!a.out.empty()) {
    stage("write predictions");
    toptune::write_file_bytes(a.out, json{{"predicted", labels}}.dump() + "\n");
    result["predictions"] = a.out;
  }
  std::cout << result.dump() << std::endl;
  return 0;
}

// ---------------------------------------------------------------- grid-cv

struct GridArgs {
  std::string features;
  std::string test_features;
  std::string out;
  std::string grid;
  std::string kind = "kernel";
  std::vector<double> gammas;
  std::vector<double> lambdas;
  std::vector<double> alphas;
  std::uint32_t folds = 5;
  std::uint64_t seed = 0;
  std::uint64_t center_seed = 0;
  std::size_t centers = 0;
  std::size_t max_iter = 100;
  double tol = 1e-8;
  bool standardize = false;
  unsigned parallel = 1;
  std::string accuracy_source = "cv_mean";
};

toptune::GridSpec build_grid(const GridArgs& a) {
  const bool kernel = a.kind == "kernel";
  const bool custom = !a.gammas.empty() || !a.lambdas.empty() || !a.alphas.empty();
  if (a.grid == "default" && custom) {
    throw toptune::ValidationError("--grid default cannot be combined with --gammas/--lambdas/--alphas");
  }
  if (kernel && !a.alphas.empty()) throw toptune::ValidationError("--alphas needs --kind linear");
  if (!kernel && (!a.gammas.empty() || !a.lambdas.empty())) {
    throw toptune::ValidationError("--gammas/--lambdas need --kind kernel");
  }
  toptune::GridSpec grid = kernel ? toptune::GridSpec::default_kernel() : toptune::GridSpec::default_linear();
  if (!a.gammas.empty()) grid.gammas = a.gammas;
  if (!a.lambdas.empty()) grid.lambdas = a.lambdas;
  if (!a.alphas.empty()) grid.alphas = a.alphas;
  grid.validate();
  return grid;
}

json config_json(const toptune::GridConfig& c) {
  if (c.kind == toptune::GridKind::kernel) return {{"gamma", c.gamma}, {"lambda", c.lambda}};
  return {{"alpha", c.alpha}};
}

int run_grid_cv(const GridArgs& a) {
  stage("validate grid");
  const toptune::GridSpec grid = build_grid(a);
  if (a.accuracy_source == "holdout" && a.test_features.empty()) {
    throw toptune::ValidationError("--accuracy-source holdout needs --test");
  }
  toptune::CvOptions opts;
  opts.folds = a.folds;
  opts.seed = a.seed;
  opts.standardize = a.standardize;
  opts.parallel = a.parallel;
  opts.solver.seed = a.center_seed;
  opts.solver.num_centers = a.centers;
  opts.solver.max_iter = a.max_iter;
  opts.solver.tol = a.tol;
  opts.solver.validate();

  stage("load features");
  const auto loaded = toptune::read_feature_file(a.features);
  std::optional<toptune::LoadedFeatures> test;
  if (!a.test_features.empty()) test = toptune::read_feature_file(a.test_features);

  stage("cross-validate");
  const toptune::GridResult result = toptune::run_grid_cv(loaded.features, grid, opts);

  json configs = json::array();
  for (const auto& r : result.records) {
    json c = config_json(r.config);
    c["fold_accuracies"] = r.fold_accuracies;
    c["mean_accuracy"] = r.mean_accuracy;
    c["wall_time_s"] = r.wall_time_s;
    c["converged"] = r.converged;
    c["max_iterations"] = r.max_iterations;
    c["max_residual"] = r.max_residual;
    c["error"] = r.error ? json(*r.error) : json(nullptr);
    configs.push_back(std::move(c));
    if (r.error) std::cerr << "toptune grid-cv: config failed: " << *r.error << "\n";
  }

  stage("select best");
  const std::size_t best_index = toptune::select_best_index(result.records);
  const toptune::RunRecord& best = result.records[best_index];
  json best_json = config_json(best.config);
  best_json["index"] = best_index;
  best_json["mean_accuracy"] = best.mean_accuracy;

  json holdout = nullptr;
  if (test) {
    stage("holdout");
    const auto h = toptune::evaluate_holdout(loaded.features, test->features, best.config, opts);
    holdout = {{"dataset", test->manifest.dataset_name},
               {"accuracy", h.accuracy},
               {"accuracy_percent", 100.0 * h.accuracy},
               {"wall_time_s", h.wall_time_s},
               {"training_log", log_json(h.log)}};
  }

  const double acc_top =
      a.accuracy_source == "holdout" ? holdout["accuracy_percent"].get<double>() : 100.0 * best.mean_accuracy;
  json out = {{"command", "grid-cv"},
              {"dataset", loaded.manifest.dataset_name},
              {"n", loaded.features.size()},
              {"d", loaded.features.dim()},
              {"C", loaded.features.num_classes},
              {"grid_kind", toptune::to_string(grid.kind)},
              {"folds", a.folds},
              {"seed", a.seed},
              {"center_seed", a.center_seed},
              {"num_centers", a.centers},
              {"standardize", a.standardize},
              {"configs", configs},
              {"total_wall_time_s", result.total_wall_time_s},
              {"best", best_json},
              {"holdout", holdout},
              {"accuracy_source", a.accuracy_source},
              {"acc_top_percent", acc_top},
              {"time_top_s", result.total_wall_time_s}};

  stage("write results");
  write_text(a.out, out.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------- compare

struct CompareArgs {
  std::string top;
  std::string baseline;
  double band = 2.5;
  std::string out;
  std::string format = "markdown";
  bool extended = false;
};

json read_json_file(const std::string& path) {
  try {
    return json::parse(toptune::read_file_bytes(path));
  } catch (const json::exception& e) {
    throw toptune::FormatError(path + ": invalid JSON: " + e.what());
  }
}

int run_compare(const CompareArgs& a) {
  stage("validate options");
  const auto format = toptune::parse_report_format(a.format);
  stage("load top-tuning results");
  const auto top = toptune::parse_top_results(read_json_file(a.top));
  stage("load baselines");
  const auto baselines = toptune::parse_baselines(read_json_file(a.baseline));
  stage("compare");
  const auto report = toptune::compare(top, baselines, a.band);
  stage("write report");
  write_text(a.out, toptune::render_report(report, format, a.extended));
  return 0;
}

// ---------------------------------------------------------------- make-blobs

struct BlobArgs {
  toptune::BlobSpec spec;
  std::string name = "blobs";
  std::string out;
};

int run_make_blobs(const BlobArgs& a) {
  stage("generate");
  const auto data = toptune::make_blobs(a.spec);
  stage("write features");
  toptune::DatasetManifest manifest = toptune::DatasetManifest::describe(data, a.name);
  manifest.backbone_name = "synthetic";
  manifest.preprocessing_tag = "gaussian-blobs";
  toptune::write_feature_file(data, manifest, a.out);
  std::cout << json{{"command", "make-blobs"}, {"out", a.out}, {"n", data.size()},
                    {"d", data.dim()}, {"C", data.num_classes}}.dump()
            << std::endl;
  return 0;
}

// ---------------------------------------------------------------- main

std::string active_subcommand(int argc, char** argv, const std::vector<std::string>& names) {
  for (int i = 1; i < argc; ++i)
    for (const auto& n : names)
      if (argv[i] == n) return n;
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"toptune: kernel classifiers on fixed features"};
  app.require_subcommand(1);
  app.set_config("--config", "", "JSON file with flag values (see docs/cli.md)");
  app.config_formatter(std::make_shared<JsonConfig>(
      active_subcommand(argc, argv, {"train", "predict", "grid-cv", "compare", "make-blobs"}), &app));

  const CLI::Validator positive(
      [](std::string& text) -> std::string {
        double v = 0.0;
        if (!CLI::detail::lexical_cast(text, v)) return "not a number: " + text;
        return v > 0.0 && std::isfinite(v) ? std::string{} : "must be positive and finite (got " + text + ")";
      },
      "POSITIVE");
  const auto kind_check = CLI::IsMember({"nystrom", "exact", "linear"});

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "fit one model and write it to a file");
  train_cmd->add_option("--gamma", train.gamma, "kernel width")->check(positive)->capture_default_str();
  train_cmd->add_option("--lambda", train.lambda, "ridge regularization")->check(positive)->capture_default_str();
  train_cmd->add_option("--alpha", train.alpha, "linear ridge regularization")->check(positive)->capture_default_str();
  train_cmd->add_option("--kind", train.kind, "nystrom, exact or linear")->check(kind_check)->capture_default_str();
  train_cmd->add_option("--centers,-M", train.centers, "Nystrom centers (0 = default)")->capture_default_str();
  train_cmd->add_option("--seed", train.seed, "center sampling seed")->capture_default_str();
  train_cmd->add_option("--max-iter", train.max_iter, "PCG iteration cap")->check(CLI::Range(1, 1000000))->capture_default_str();
  train_cmd->add_option("--tol", train.tol, "PCG relative residual target")->check(CLI::Range(1e-300, 1.0))->capture_default_str();
  train_cmd->add_option("--exact-cap", train.exact_cap, "sample cap for --kind exact")->capture_default_str();
  train_cmd->add_flag("--standardize", train.standardize, "z-score features before training");
  train_cmd->add_option("--features", train.features, "TTF1 feature file")->required();
  train_cmd->add_option("--out,-o", train.out, "model file to write")->required();

  PredictArgs predict;
  auto* predict_cmd = app.add_subcommand("predict", "score a feature file with a saved model");
  predict_cmd->add_option("--model", predict.model, "model file")->required();
  predict_cmd->add_option("--features", predict.features, "TTF1 feature file")->required();
  predict_cmd->add_option("--out,-o", predict.out, "write predicted labels as JSON");

  GridArgs grid;
  auto* grid_cmd = app.add_subcommand("grid-cv", "cross-validate a hyperparameter grid");
  grid_cmd->add_option("--grid", grid.grid, "'default' for the standard grid of the chosen kind")->check(CLI::IsMember({"default"}));
  grid_cmd->add_option("--kind", grid.kind, "kernel or linear")->check(CLI::IsMember({"kernel", "linear"}))->capture_default_str();
  grid_cmd->add_option("--gammas", grid.gammas, "kernel widths")->delimiter(',')->check(positive);
  grid_cmd->add_option("--lambdas", grid.lambdas, "ridge regularizations")->delimiter(',')->check(positive);
  grid_cmd->add_option("--alphas", grid.alphas, "linear ridge regularizations")->delimiter(',')->check(positive);
  grid_cmd->add_option("--folds", grid.folds, "number of folds")->check(CLI::Range(2u, 1000000u))->capture_default_str();
  grid_cmd->add_option("--seed", grid.seed, "fold assignment seed")->capture_default_str();
  grid_cmd->add_option("--center-seed", grid.center_seed, "center sampling seed")->capture_default_str();
  grid_cmd->add_option("--centers,-M", grid.centers, "Nystrom centers (0 = default)")->capture_default_str();
  grid_cmd->add_option("--max-iter", grid.max_iter, "PCG iteration cap")->check(CLI::Range(1, 1000000))->capture_default_str();
  grid_cmd->add_option("--tol", grid.tol, "PCG relative residual target")->check(CLI::Range(1e-300, 1.0))->capture_default_str();
  grid_cmd->add_option("--parallel", grid.parallel, "grid points run concurrently")->check(CLI::Range(1u, 1024u))->capture_default_str();
  grid_cmd->add_flag("--standardize", grid.standardize, "z-score features inside each fold");
  grid_cmd->add_option("--test", grid.test_features, "held-out TTF1 file scored with the best config");
  grid_cmd->add_option("--accuracy-source", grid.accuracy_source, "cv_mean or holdout")
      ->check(CLI::IsMember({"cv_mean", "holdout"}))->capture_default_str();
  grid_cmd->add_option("--features", grid.features, "TTF1 feature file")->required();
  grid_cmd->add_option("--out,-o", grid.out, "results JSON (default: stdout)");

  CompareArgs cmp;
  auto* compare_cmd = app.add_subcommand("compare", "compare top-tuning results with baselines");
  compare_cmd->add_option("--top", cmp.top, "top-tuning results JSON")->required();
  compare_cmd->add_option("--baseline", cmp.baseline, "baseline results JSON")->required();
  compare_cmd->add_option("--band", cmp.band, "|delta accuracy| band in percent")->check(CLI::NonNegativeNumber)->capture_default_str();
  compare_cmd->add_option("--format", cmp.format, "markdown, csv or json")->check(CLI::IsMember({"markdown", "md", "csv", "json"}))->capture_default_str();
  compare_cmd->add_flag("--extended", cmp.extended, "add absolute accuracy and time columns");
  compare_cmd->add_option("--out,-o", cmp.out, "report file (default: stdout)");

  BlobArgs blobs;
  auto* blobs_cmd = app.add_subcommand("make-blobs", "write a synthetic Gaussian-blob feature file");
  blobs_cmd->add_option("--n", blobs.spec.n, "samples")->check(CLI::PositiveNumber)->capture_default_str();
  blobs_cmd->add_option("--d", blobs.spec.d, "dimension")->check(CLI::PositiveNumber)->capture_default_str();
  blobs_cmd->add_option("--classes", blobs.spec.num_classes, "classes")->check(CLI::PositiveNumber)->capture_default_str();
  blobs_cmd->add_option("--separation", blobs.spec.separation, "mean distance in sigmas")->check(CLI::NonNegativeNumber)->capture_default_str();
  blobs_cmd->add_option("--sigma", blobs.spec.sigma, "per-coordinate std")->check(positive)->capture_default_str();
  blobs_cmd->add_option("--seed", blobs.spec.seed, "generator seed")->capture_default_str();
  blobs_cmd->add_option("--name", blobs.name, "dataset name in the manifest")->capture_default_str();
  blobs_cmd->add_option("--out,-o", blobs.out, "TTF1 file to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "toptune: invalid arguments: " << e.what() << "\n";
    return kExitValidation;
  }

  std::string command = "toptune";
  try {
    if (train_cmd->parsed()) {
      command += " train";
      return run_train(train);
    }
    if (predict_cmd->parsed()) {
      command += " predict";
      return run_predict(predict);
    }
    if (grid_cmd->parsed()) {
      command += " grid-cv";
      return run_grid_cv(grid);
    }
    if (compare_cmd->parsed()) {
      command += " compare";
      return run_compare(cmp);
    }
    if (blobs_cmd->parsed()) {
      command += " make-blobs";
      return run_make_blobs(blobs);
    }
  } catch (const toptune::NumericError& e) {
    std::cerr << command << ": " << g_stage << " failed (numeric): " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::bad_alloc&) {
    std::cerr << command << ": " << g_stage << " failed: out of memory\n";
    return kExitNumeric;
  } catch (const toptune::Error& e) {
    std::cerr << command << ": " << g_stage << " failed: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << command << ": " << g_stage << " failed (internal): " << e.what() << "\n";
    return 1;
  }
  return kExitValidation;
}
