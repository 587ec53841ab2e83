// rope: robust post hoc explanations of black-box classifiers, plus the
// synthetic-shift benchmark harness around them.
//
// Subcommands: synth, blackbox, explain, eval, sweep, stability.
// Every command is a pure function of (flags, input files, seed); all
// randomness is controlled by an explicit --seed. Output files are written
// atomically and embed their resolved run configuration.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rope/rope.hpp"

using nlohmann::json;

namespace {

// Write-temp-then-rename so concurrent readers never observe a torn file.
void atomic_write(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
    out << contents;
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load_json(const std::string& path) {
  try {
    return json::parse(slurp(path));
  } catch (const json::parse_error& ex) {
    throw std::runtime_error("malformed JSON in " + path + ": " + ex.what());
  }
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw std::runtime_error("empty list: " + csv);
  return out;
}

std::vector<std::string> parse_string_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> split_command(const std::string& cmd) {
  std::vector<std::string> out;
  std::stringstream ss(cmd);
  std::string item;
  while (ss >> item) out.push_back(item);
  return out;
}

rope::CsvData load_csv_group(const std::string& path,
                             const std::string& group) {
  rope::CsvData csv = rope::read_csv(path);
  if (group.empty()) return csv;
  const auto idx = rope::group_indices(csv, group);
  if (idx.empty())
    throw std::runtime_error("no rows with group '" + group + "' in " + path);
  rope::CsvData out;
  out.feature_names = csv.feature_names;
  if (csv.labels) out.labels.emplace();
  for (std::size_t i : idx) {
    out.raw.push_back(csv.raw[i]);
    if (csv.labels) out.labels->push_back((*csv.labels)[i]);
  }
  return out;
}

// A loaded black box: the handle, the frame its queries expect (fitted on
// its training data when available), and the interpretable model when the
// reference wraps one (used by the mismatch metrics).
struct LoadedBlackBox {
  rope::BlackBoxHandle handle;
  std::optional<rope::Standardizer> frame;
  std::vector<std::string> feature_names;
  std::optional<rope::LinearExplanation> linear_model;
  std::optional<rope::DecisionSet> dset_model;
};

LoadedBlackBox load_blackbox(const std::string& path) {
  const json j = load_json(path);
  LoadedBlackBox out;

  if (!j.contains("kind")) {
    // An explanation document wrapped as an interpretable black box.
    const rope::AnyExplanation e = rope::any_from_json(j);
    if (std::holds_alternative<rope::LinearExplanation>(e)) {
      const auto& lin = std::get<rope::LinearExplanation>(e);
      out.handle = rope::wrap_interpretable(lin);
      out.linear_model = lin;
      out.feature_names = lin.feature_names;
    } else if (std::holds_alternative<rope::DecisionSet>(e)) {
      const auto& ds = std::get<rope::DecisionSet>(e);
      int dim = 0;
      for (const rope::Rule& r : ds.rules)
        for (const rope::Predicate& p : r.condition)
          dim = std::max(dim, p.feature + 1);
      out.handle = rope::wrap_interpretable(ds, dim);
      out.dset_model = ds;
    } else {
      throw std::runtime_error(
          "clustered explanations cannot serve as black boxes");
    }
    return out;
  }

  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "external") {
    const auto command = j.at("command").get<std::vector<std::string>>();
    rope::ExternalOptions options;
    if (j.contains("timeout_ms"))
      options.timeout_ms = j.at("timeout_ms").get<int>();
    out.handle = rope::connect_external(command, options);
    if (j.contains("data")) {
      const rope::CsvData csv = rope::read_csv(j.at("data").get<std::string>());
      const rope::Dataset ds = rope::Dataset::from_raw(csv.raw, csv.feature_names);
      out.frame = ds.standardizer();
      out.feature_names = ds.feature_names();
    }
    return out;
  }

  // Builtin kinds re-train deterministically from (data, seed, params).
  const std::string data_path = j.at("data").get<std::string>();
  const rope::CsvData csv = rope::read_csv(data_path);
  if (!csv.labels)
    throw std::runtime_error("blackbox training data has no label column: " +
                             data_path);
  const rope::Dataset data =
      rope::Dataset::from_raw(csv.raw, csv.feature_names, csv.labels);
  out.frame = data.standardizer();
  out.feature_names = data.feature_names();
  const std::uint64_t seed = j.at("seed").get<std::uint64_t>();
  json params = j.value("params", json::object());
  if (params.is_null()) params = json::object();

  if (kind == "mlp") {
    rope::MlpConfig cfg;
    if (params.contains("layers"))
      cfg.layers = params.at("layers").get<std::vector<int>>();
    if (params.contains("epochs")) cfg.epochs = params.at("epochs").get<int>();
    if (params.contains("learning_rate"))
      cfg.learning_rate = params.at("learning_rate").get<double>();
    out.handle = rope::train_mlp(data.rows(), data.labels(), cfg, seed);
  } else if (kind == "gb_stumps") {
    const int rounds = params.value("rounds", 100);
    out.handle = rope::train_gb_stumps(data.rows(), data.labels(), rounds, seed);
  } else if (kind == "logistic") {
    rope::LinearExplanation model;
    out.handle = rope::train_logistic_blackbox(
        data.rows(), data.labels(), params.value("epochs", 30),
        params.value("learning_rate", 0.1), params.value("l2_penalty", 1e-4),
        seed, &model);
    model.feature_names = data.feature_names();
    out.linear_model = std::move(model);
  } else if (kind == "decision_set") {
    rope::MiningConfig mining;
    mining.max_depth = params.value("max_depth", 2);
    mining.quantiles = params.value("quantiles", 4);
    mining.min_support = params.value("min_support", 0.01);
    rope::DecisionSet model;
    out.handle = rope::train_decision_set_blackbox(
        data.rows(), data.labels(), mining, params.value("lambda", 5.0),
        params.value("alpha_rules", 5), seed, &model);
    out.dset_model = std::move(model);
  } else {
    throw std::runtime_error("unknown black-box kind: " + kind);
  }
  return out;
}

// Standardizes evaluation data into the black box's frame; falls back to
// the data's own frame (with a warning) when the reference has none.
rope::Dataset frame_data(const rope::CsvData& csv, const LoadedBlackBox& bb) {
  if (bb.frame) {
    return rope::Dataset::from_raw_with(csv.raw, *bb.frame, csv.feature_names,
                                        csv.labels);
  }
  rope::log_warn("black box carries no training-data frame; standardizing "
                 "with the evaluation data's own statistics");
  return rope::Dataset::from_raw(csv.raw, csv.feature_names, csv.labels);
}

struct SynthArgs {
  std::string kind = "correlation";
  int dim = 2;
  double beta = 0.0;
  double mu = 0.0;
  double sigma = 1.0;
  int n = 5000;
  double alpha = 0.0;
  bool has_alpha = false;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  rope::SyntheticSpec spec;
  spec.dim = a.dim;
  spec.beta = a.beta;
  spec.mu = a.mu;
  spec.sigma = a.sigma;
  spec.n_samples = a.n;
  spec.seed = a.seed;
  const rope::ShiftKind kind = rope::shift_kind_from_name(a.kind);
  if (a.has_alpha) spec = rope::shift_spec(spec, kind, a.alpha);

  const rope::SyntheticSample sample = rope::gen_synthetic_raw(spec);
  rope::CsvData csv;
  csv.raw = sample.raw;
  csv.feature_names = sample.feature_names;
  csv.labels = sample.labels;

  const json config{{"command", "synth"},     {"kind", a.kind},
                    {"dim", spec.dim},        {"beta", spec.beta},
                    {"mu", spec.mu},          {"sigma", spec.sigma},
                    {"n", spec.n_samples},    {"alpha", a.alpha},
                    {"seed", a.seed}};
  std::ostringstream os;
  rope::write_csv(os, csv, "rope-config: " + config.dump());
  atomic_write(a.out, os.str());
  std::printf("wrote %s (%d rows, %d features)\n", a.out.c_str(),
              spec.n_samples, spec.dim);
  return 0;
}

struct BlackboxArgs {
  std::string data;
  std::string kind = "mlp";
  std::string external;
  std::string layers = "16,16,16,16,16";
  int epochs = 30;
  double learning_rate = 0.1;
  int rounds = 100;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_blackbox(const BlackboxArgs& a) {
  json ref{{"format_version", 1}};
  if (!a.external.empty()) {
    ref["kind"] = "external";
    ref["command"] = split_command(a.external);
    if (!a.data.empty()) ref["data"] = a.data;
  } else {
    if (a.data.empty())
      throw std::runtime_error("--data is required for builtin black boxes");
    ref["kind"] = a.kind;
    ref["data"] = a.data;
    ref["seed"] = a.seed;
    json params = json::object();
    if (a.kind == "mlp") {
      std::vector<int> layers;
      for (double v : parse_double_list(a.layers))
        layers.push_back(static_cast<int>(v));
      params["layers"] = layers;
      params["epochs"] = a.epochs;
      params["learning_rate"] = a.learning_rate;
    } else if (a.kind == "gb_stumps") {
      params["rounds"] = a.rounds;
    } else if (a.kind == "logistic") {
      params["epochs"] = a.epochs;
      params["learning_rate"] = a.learning_rate;
    } else if (a.kind == "decision_set") {
      // mining defaults; exposed through explain-side flags when needed
    } else {
      throw std::runtime_error("unknown black-box kind: " + a.kind);
    }
    ref["params"] = params;
  }

  // Validate the reference by loading it once before writing.
  {
    const std::string tmp_path = a.out + ".check";
    atomic_write(tmp_path, ref.dump(2) + "\n");
    load_blackbox(tmp_path);
    std::filesystem::remove(tmp_path);
  }
  atomic_write(a.out, ref.dump(2) + "\n");
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

struct ExplainArgs {
  std::string data;
  std::string blackbox;
  std::string family = "linear";
  std::string group;
  double s0 = 1.0;
  double delta_max = 1.0;
  int k_shifts = 10;
  double lambda = 5.0;
  int alpha_rules = 5;
  int epochs = 30;
  double learning_rate = 0.1;
  int batch_size = 32;
  double l2_penalty = 1e-4;
  int max_depth = 2;
  int quantiles = 4;
  double min_support = 0.01;
  int k_clusters = 0;  // 0 = choose by BIC
  int k_max = 6;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_explain(const ExplainArgs& a) {
  const LoadedBlackBox bb = load_blackbox(a.blackbox);
  const rope::CsvData csv = load_csv_group(a.data, a.group);
  const rope::Dataset data = frame_data(csv, bb);

  rope::ExplainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.learning_rate = a.learning_rate;
  cfg.batch_size = a.batch_size;
  cfg.l2_penalty = a.l2_penalty;
  cfg.mining.max_depth = a.max_depth;
  cfg.mining.quantiles = a.quantiles;
  cfg.mining.min_support = a.min_support;
  cfg.lambda = a.lambda;
  cfg.alpha_rules = a.alpha_rules;
  cfg.k_shifts = a.k_shifts;

  const rope::ShiftSet shift_set(a.s0, a.delta_max, data.dim());

  rope::AnyExplanation explanation;
  int k_used = 0;
  if (a.family == "linear") {
    explanation = rope::fit_robust_linear(data, bb.handle, shift_set, cfg, a.seed);
  } else if (a.family == "dset") {
    explanation = rope::train_robust_dset(data, bb.handle, shift_set, cfg, a.seed);
  } else if (a.family == "linear-multi" || a.family == "dset-multi") {
    k_used = a.k_clusters > 0
                 ? a.k_clusters
                 : rope::select_k_bic(data.rows(), a.k_max,
                                      rope::derive_seed(a.seed, 0x4bu));
    const rope::Family fam = a.family == "linear-multi"
                                 ? rope::Family::linear
                                 : rope::Family::decision_set;
    explanation =
        rope::train_multi(data, bb.handle, shift_set, k_used, fam, cfg, a.seed);
  } else {
    throw std::runtime_error("unknown family: " + a.family);
  }

  json j = rope::to_json(explanation);
  j["config"] = json{{"command", "explain"},
                     {"data", a.data},
                     {"blackbox", a.blackbox},
                     {"family", a.family},
                     {"group", a.group},
                     {"s0", a.s0},
                     {"delta_max", a.delta_max},
                     {"k_shifts", a.k_shifts},
                     {"lambda", a.lambda},
                     {"alpha_rules", a.alpha_rules},
                     {"epochs", a.epochs},
                     {"learning_rate", a.learning_rate},
                     {"batch_size", a.batch_size},
                     {"l2_penalty", a.l2_penalty},
                     {"max_depth", a.max_depth},
                     {"quantiles", a.quantiles},
                     {"min_support", a.min_support},
                     {"k_clusters", k_used},
                     {"seed", a.seed}};
  atomic_write(a.out, j.dump(2) + "\n");

  if (std::holds_alternative<rope::DecisionSet>(explanation)) {
    std::fputs(std::get<rope::DecisionSet>(explanation)
                   .render(data.feature_names())
                   .c_str(),
               stdout);
  }
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

struct EvalArgs {
  std::string explanation;
  std::string data;
  std::string blackbox;
  std::string metrics = "fidelity";
  std::string group;
  double s0 = 1.0;
  double delta_max = 1.0;
  int audit_feature = 0;
  double audit_c = 0.5;
  double grid_step = 0.05;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  const LoadedBlackBox bb = load_blackbox(a.blackbox);
  const rope::CsvData csv = load_csv_group(a.data, a.group);
  const rope::Dataset data = frame_data(csv, bb);
  const rope::AnyExplanation explanation =
      rope::any_from_json(load_json(a.explanation));

  json result{{"format_version", 1}};
  for (const std::string& metric : parse_string_list(a.metrics)) {
    if (metric == "fidelity") {
      result["fidelity"] = rope::fidelity(explanation, data.rows(), bb.handle);
    } else if (metric == "mismatch") {
      if (!bb.linear_model)
        throw std::runtime_error(
            "mismatch metric needs a linear interpretable black box");
      if (std::holds_alternative<rope::LinearExplanation>(explanation)) {
        result["coefficient_mismatch"] = rope::coefficient_mismatch(
            std::get<rope::LinearExplanation>(explanation), *bb.linear_model);
      } else if (std::holds_alternative<rope::ClusteredExplanation>(explanation)) {
        result["coefficient_mismatch"] = rope::coefficient_mismatch(
            std::get<rope::ClusteredExplanation>(explanation), *bb.linear_model);
      } else {
        throw std::runtime_error("mismatch metric needs a linear explanation");
      }
    } else if (metric == "rulematch") {
      if (!bb.dset_model)
        throw std::runtime_error(
            "rulematch metric needs a decision-set black box");
      if (!std::holds_alternative<rope::DecisionSet>(explanation))
        throw std::runtime_error("rulematch metric needs a decision-set "
                                 "explanation");
      const auto& ds = std::get<rope::DecisionSet>(explanation);
      result["rule_match"] = rope::rule_match(ds, *bb.dset_model);
      result["feature_match"] = rope::feature_match(ds, *bb.dset_model);
    } else if (metric == "audit") {
      const rope::ShiftSet shift_set(a.s0, a.delta_max, data.dim());
      const rope::ScoreFn e_score = rope::score_fn(explanation);
      const rope::ScoreFn b_score = rope::score_fn(bb.handle);
      const double marginal = rope::marginal_dependence_audit(
          e_score, b_score, data.rows(), a.audit_feature, a.audit_c, shift_set);
      const rope::SurrogateBounds bounds = rope::surrogate_bound_audit(
          e_score, b_score, data.rows(), shift_set, a.grid_step);
      result["audit"] = json{{"marginal_dependence", marginal},
                             {"surrogate_lhs", bounds.lhs},
                             {"surrogate_rhs", bounds.rhs},
                             {"bound_2eps", 2.0 * bounds.rhs}};
    } else {
      throw std::runtime_error("unknown metric: " + metric);
    }
  }
  result["config"] = json{{"command", "eval"},
                          {"explanation", a.explanation},
                          {"data", a.data},
                          {"blackbox", a.blackbox},
                          {"metrics", a.metrics},
                          {"group", a.group}};

  const std::string text = result.dump(2) + "\n";
  std::fputs(text.c_str(), stdout);
  if (!a.out.empty()) atomic_write(a.out, text);
  return 0;
}

std::string json_path_for(const std::string& csv_path) {
  std::filesystem::path p(csv_path);
  p.replace_extension(".json");
  return p.string();
}

struct SweepArgs {
  std::string kind = "correlation";
  std::string alphas = "0,0.2,0.4,0.6,0.8";
  std::string methods = "rope-linear,rope-dset,base-linear,base-dset";
  int replicates = 20;
  int dim_min = 2;
  int dim_max = 10;
  int n = 5000;
  double s0 = 1.0;
  double delta_max = 1.0;
  int threads = 0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_sweep(const SweepArgs& a) {
  rope::SweepConfig cfg;
  cfg.dim_min = a.dim_min;
  cfg.dim_max = a.dim_max;
  cfg.n_samples = a.n;
  cfg.s0 = a.s0;
  cfg.delta_max = a.delta_max;
  cfg.threads = a.threads;

  const rope::Report report = rope::run_shift_sweep(
      rope::parse_methods(parse_string_list(a.methods)),
      rope::shift_kind_from_name(a.kind), parse_double_list(a.alphas),
      a.replicates, a.seed, cfg);

  const json config{{"command", "sweep"},       {"kind", a.kind},
                    {"alphas", a.alphas},       {"methods", a.methods},
                    {"replicates", a.replicates}, {"dim_min", a.dim_min},
                    {"dim_max", a.dim_max},     {"n", a.n},
                    {"s0", a.s0},               {"delta_max", a.delta_max},
                    {"seed", a.seed}};
  std::ostringstream os;
  report.write_csv(os, "rope-config: " + config.dump());
  atomic_write(a.out, os.str());

  json j = report.to_json();
  j["config"] = config;
  atomic_write(json_path_for(a.out), j.dump(2) + "\n");
  std::printf("wrote %s and %s (%zu rows)\n", a.out.c_str(),
              json_path_for(a.out).c_str(), report.rows.size());
  return 0;
}

struct StabilityArgs {
  double noise_std = 0.2;
  std::string methods = "rope-linear,base-linear,rope-dset,base-dset";
  int replicates = 20;
  int dim = 4;
  int n = 5000;
  double s0 = 1.0;
  double delta_max = 1.0;
  int threads = 0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_stability(const StabilityArgs& a) {
  rope::SyntheticSpec spec;
  spec.dim = a.dim;
  spec.n_samples = a.n;

  rope::StabilityConfig cfg;
  cfg.s0 = a.s0;
  cfg.delta_max = a.delta_max;
  cfg.threads = a.threads;

  const rope::Report report = rope::run_stability(
      spec, a.noise_std, rope::parse_methods(parse_string_list(a.methods)),
      a.seed, a.replicates, cfg);

  const json config{{"command", "stability"},    {"noise_std", a.noise_std},
                    {"methods", a.methods},      {"replicates", a.replicates},
                    {"dim", a.dim},              {"n", a.n},
                    {"s0", a.s0},                {"delta_max", a.delta_max},
                    {"seed", a.seed}};
  std::ostringstream os;
  report.write_csv(os, "rope-config: " + config.dump());
  atomic_write(a.out, os.str());

  json j = report.to_json();
  j["config"] = config;
  atomic_write(json_path_for(a.out), j.dump(2) + "\n");
  std::printf("wrote %s and %s (%zu rows)\n", a.out.c_str(),
              json_path_for(a.out).c_str(), report.rows.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust post hoc explanations of black-box classifiers"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("--kind", synth.kind, "correlation|mean|variance");
  synth_cmd->add_option("--dim", synth.dim, "covariate dimension");
  synth_cmd->add_option("--beta", synth.beta, "equicorrelation");
  synth_cmd->add_option("--mu", synth.mu, "mean");
  synth_cmd->add_option("--sigma", synth.sigma, "standard deviation");
  synth_cmd->add_option("--n", synth.n, "sample count");
  auto* alpha_opt = synth_cmd->add_option(
      "--alpha", synth.alpha, "apply this shift magnitude before sampling");
  synth_cmd->add_option("--seed", synth.seed)->required();
  synth_cmd->add_option("--out", synth.out)->required();

  BlackboxArgs bbox;
  auto* bbox_cmd = app.add_subcommand("blackbox", "train or reference a black box");
  bbox_cmd->add_option("--data", bbox.data, "training CSV (label column required)");
  bbox_cmd->add_option("--kind", bbox.kind, "mlp|gb_stumps|logistic|decision_set");
  bbox_cmd->add_option("--external", bbox.external,
                       "external child command (overrides --kind)");
  bbox_cmd->add_option("--layers", bbox.layers, "MLP hidden widths");
  bbox_cmd->add_option("--epochs", bbox.epochs);
  bbox_cmd->add_option("--lr", bbox.learning_rate);
  bbox_cmd->add_option("--rounds", bbox.rounds, "boosting rounds");
  bbox_cmd->add_option("--seed", bbox.seed)->required();
  bbox_cmd->add_option("--out-model-ref", bbox.out)->required();

  ExplainArgs explain;
  auto* explain_cmd = app.add_subcommand("explain", "fit a robust explanation");
  explain_cmd->add_option("--data", explain.data)->required();
  explain_cmd->add_option("--blackbox", explain.blackbox)->required();
  explain_cmd->add_option("--family", explain.family,
                          "linear|dset|linear-multi|dset-multi");
  explain_cmd->add_option("--group", explain.group, "group column value to keep");
  explain_cmd->add_option("--s0", explain.s0, "L1 shift budget");
  explain_cmd->add_option("--delta-max", explain.delta_max, "per-coordinate cap");
  explain_cmd->add_option("--k-shifts", explain.k_shifts);
  explain_cmd->add_option("--lambda", explain.lambda);
  explain_cmd->add_option("--alpha-rules", explain.alpha_rules);
  explain_cmd->add_option("--epochs", explain.epochs);
  explain_cmd->add_option("--lr", explain.learning_rate);
  explain_cmd->add_option("--batch", explain.batch_size);
  explain_cmd->add_option("--l2", explain.l2_penalty);
  explain_cmd->add_option("--max-depth", explain.max_depth);
  explain_cmd->add_option("--quantiles", explain.quantiles);
  explain_cmd->add_option("--min-support", explain.min_support);
  explain_cmd->add_option("--k-clusters", explain.k_clusters,
                          "cluster count for multi families (0 = BIC)");
  explain_cmd->add_option("--k-max", explain.k_max, "BIC search upper bound");
  explain_cmd->add_option("--seed", explain.seed)->required();
  explain_cmd->add_option("--out", explain.out)->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate an explanation");
  eval_cmd->add_option("--explanation", eval.explanation)->required();
  eval_cmd->add_option("--data", eval.data)->required();
  eval_cmd->add_option("--blackbox", eval.blackbox)->required();
  eval_cmd->add_option("--metrics", eval.metrics,
                       "fidelity,mismatch,rulematch,audit");
  eval_cmd->add_option("--group", eval.group);
  eval_cmd->add_option("--s0", eval.s0, "audit shift budget");
  eval_cmd->add_option("--delta-max", eval.delta_max);
  eval_cmd->add_option("--audit-feature", eval.audit_feature);
  eval_cmd->add_option("--audit-c", eval.audit_c);
  eval_cmd->add_option("--grid-step", eval.grid_step);
  eval_cmd->add_option("--out", eval.out);

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "synthetic distribution-shift sweep");
  sweep_cmd->add_option("--kind", sweep.kind, "correlation|mean|variance");
  sweep_cmd->add_option("--alphas", sweep.alphas, "comma-separated shift magnitudes");
  sweep_cmd->add_option("--methods", sweep.methods);
  sweep_cmd->add_option("--replicates", sweep.replicates);
  sweep_cmd->add_option("--dim-min", sweep.dim_min);
  sweep_cmd->add_option("--dim-max", sweep.dim_max);
  sweep_cmd->add_option("--n", sweep.n, "samples per dataset");
  sweep_cmd->add_option("--s0", sweep.s0);
  sweep_cmd->add_option("--delta-max", sweep.delta_max);
  sweep_cmd->add_option("--threads", sweep.threads);
  sweep_cmd->add_option("--seed", sweep.seed)->required();
  sweep_cmd->add_option("--out", sweep.out)->required();

  StabilityArgs stability;
  auto* stab_cmd = app.add_subcommand("stability", "input-noise stability experiment");
  stab_cmd->add_option("--noise-std", stability.noise_std);
  stab_cmd->add_option("--methods", stability.methods);
  stab_cmd->add_option("--replicates", stability.replicates);
  stab_cmd->add_option("--dim", stability.dim);
  stab_cmd->add_option("--n", stability.n);
  stab_cmd->add_option("--s0", stability.s0);
  stab_cmd->add_option("--delta-max", stability.delta_max);
  stab_cmd->add_option("--threads", stability.threads);
  stab_cmd->add_option("--seed", stability.seed)->required();
  stab_cmd->add_option("--out", stability.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // 1 = usage error
  }

  try {
    synth.has_alpha = alpha_opt->count() > 0;
    if (synth_cmd->parsed()) return cmd_synth(synth);
    if (bbox_cmd->parsed()) return cmd_blackbox(bbox);
    if (explain_cmd->parsed()) return cmd_explain(explain);
    if (eval_cmd->parsed()) return cmd_eval(eval);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep);
    if (stab_cmd->parsed()) return cmd_stability(stability);
  } catch (const rope::ExternalError& ex) {
    std::fprintf(stderr, "error: external protocol: %s\n", ex.what());
    return 2;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 2;
  }
  return 0;
}
