#include "jtln/experiment.hpp"

#include "jtln/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace jtln {

namespace {

struct SeedData {
  TransferDataset dataset;
  CostMatrix mmd_cost;
  CostMatrix ot_cost;
};

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string::size_type begin = 0;
  while (true) {
    const auto end = line.find(sep, begin);
    parts.push_back(line.substr(begin, end == std::string::npos ? end : end - begin));
    if (end == std::string::npos) break;
    begin = end + 1;
  }
  return parts;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

double to_double(const std::string& value, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw InvalidSpec("cannot parse '" + value + "' for key '" + key + "'");
  }
}

long to_long(const std::string& value, const std::string& key) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw InvalidSpec("cannot parse '" + value + "' for key '" + key + "'");
  }
}

void write_report_jsonl(const TrainReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  int epoch = 1;
  for (const auto& record : report.epochs) {
    nlohmann::json line{{"epoch", epoch++},
                        {"target_ce", record.target_ce},
                        {"source_ce", record.source_ce},
                        {"ot_loss", record.ot_loss},
                        {"objective", record.objective},
                        {"test_accuracy", record.test_accuracy}};
    out << line.dump() << "\n";
  }
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (const double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0;
  for (const double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

std::string to_string(RunKind kind) {
  switch (kind) {
    case RunKind::TargetOnly: return "target-only";
    case RunKind::Consecutive: return "consecutive";
    case RunKind::JointNoOt: return "joint-no-ot";
    case RunKind::JtlnMkMmd: return "jtln-mkmmd";
    case RunKind::JtlnOt: return "jtln-ot";
  }
  return "unknown";
}

RunKind run_kind_from_string(const std::string& name) {
  if (name == "target-only") return RunKind::TargetOnly;
  if (name == "consecutive") return RunKind::Consecutive;
  if (name == "joint-no-ot") return RunKind::JointNoOt;
  if (name == "jtln-mkmmd") return RunKind::JtlnMkMmd;
  if (name == "jtln-ot") return RunKind::JtlnOt;
  throw InvalidSpec("unknown run kind '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (runs.empty()) throw InvalidSpec("experiment needs at least one run");
  if (seeds.empty()) throw InvalidSpec("experiment needs at least one seed");
  if (lambda_ot_values.empty()) throw InvalidSpec("experiment needs at least one lambda_ot value");
  for (const double v : lambda_ot_values)
    if (v < 0) throw InvalidSpec("lambda_ot values must be nonnegative");
  if (output_dir.empty()) throw InvalidSpec("output_dir must be set");
  const bool any_path = !target_train_path.empty() || !target_test_path.empty() || !source_path.empty();
  const bool all_paths = !target_train_path.empty() && !target_test_path.empty() && !source_path.empty();
  if (any_path && !all_paths)
    throw InvalidSpec("either set all three dataset paths or none");
  if (!any_path) data.validate();
  train.validate();
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidSpec("cannot open experiment config '" + path + "'");
  ExperimentConfig config;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidSpec("expected key=value at line " + std::to_string(line_no));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (key == "feature_dim") config.data.feature_dim = static_cast<int>(to_long(value, key));
    else if (key == "target_categories") config.data.target_categories = static_cast<int>(to_long(value, key));
    else if (key == "source_categories") config.data.source_categories = static_cast<int>(to_long(value, key));
    else if (key == "samples_per_target_train") config.data.samples_per_target_train = static_cast<int>(to_long(value, key));
    else if (key == "samples_per_target_test") config.data.samples_per_target_test = static_cast<int>(to_long(value, key));
    else if (key == "samples_per_source") config.data.samples_per_source = static_cast<int>(to_long(value, key));
    else if (key == "relatedness") config.data.relatedness = to_double(value, key);
    else if (key == "noise_sigma") config.data.noise_sigma = to_double(value, key);
    else if (key == "target_train_path") config.target_train_path = value;
    else if (key == "target_test_path") config.target_test_path = value;
    else if (key == "source_path") config.source_path = value;
    else if (key == "cost_seed") config.cost_params.seed = static_cast<std::uint64_t>(to_long(value, key));
    else if (key == "shuffle_repeats") config.cost_params.shuffle_repeats = static_cast<int>(to_long(value, key));
    else if (key == "cost_sinkhorn_lambda") config.cost_params.sinkhorn.lambda = to_double(value, key);
    else if (key == "lambda_s") config.train.lambda_s = to_double(value, key);
    else if (key == "lambda_ot") {
      config.lambda_ot_values.clear();
      for (const auto& token : split(value, ','))
        config.lambda_ot_values.push_back(to_double(trim(token), key));
    } else if (key == "learning_rate") config.train.learning_rate = to_double(value, key);
    else if (key == "batch_size") config.train.batch_size = static_cast<int>(to_long(value, key));
    else if (key == "epochs") config.train.epochs = static_cast<int>(to_long(value, key));
    else if (key == "hidden_dim") config.train.hidden_dim = static_cast<int>(to_long(value, key));
    else if (key == "sinkhorn_lambda") config.train.sinkhorn.lambda = to_double(value, key);
    else if (key == "sinkhorn_max_iter") config.train.sinkhorn.max_iterations = static_cast<int>(to_long(value, key));
    else if (key == "sinkhorn_tol") config.train.sinkhorn.convergence_tol = to_double(value, key);
    else if (key == "runs") {
      config.runs.clear();
      for (const auto& token : split(value, ',')) config.runs.push_back(run_kind_from_string(trim(token)));
    } else if (key == "seeds") {
      config.seeds.clear();
      for (const auto& token : split(value, ','))
        config.seeds.push_back(static_cast<std::uint64_t>(to_long(trim(token), key)));
    } else if (key == "output_dir") config.output_dir = value;
    else throw InvalidSpec("unknown config key '" + key + "' at line " + std::to_string(line_no));
  }
  config.validate();
  return config;
}

ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::function<void(const std::string&)>& progress) {
  config.validate();
  std::filesystem::create_directories(config.output_dir);
  const auto note = [&](const std::string& msg) {
    if (progress) progress(msg);
  };

  const bool needs_mmd = std::find(config.runs.begin(), config.runs.end(), RunKind::JtlnMkMmd) !=
                         config.runs.end();
  const bool needs_ot = std::find(config.runs.begin(), config.runs.end(), RunKind::JtlnOt) !=
                        config.runs.end();
  const bool fixed_data = !config.target_train_path.empty();

  // Per-seed datasets and cost matrices, shared by all runs of that seed.
  std::vector<SeedData> seed_data;
  seed_data.reserve(config.seeds.size());
  for (const std::uint64_t seed : config.seeds) {
    SeedData entry;
    if (fixed_data) {
      entry.dataset.target_train = load_labeled_set(config.target_train_path);
      entry.dataset.target_test = load_labeled_set(config.target_test_path);
      entry.dataset.source = load_labeled_set(config.source_path);
    } else {
      SyntheticSpec spec = config.data;
      spec.seed = seed;
      entry.dataset = generate(spec);
    }
    if (needs_mmd || needs_ot) {
      const CategoryBank source_bank = bank_from_labeled_set(entry.dataset.source);
      const CategoryBank target_bank = bank_from_labeled_set(entry.dataset.target_train);
      CostMetricParams params = config.cost_params;
      params.seed = splitmix64_mix(config.cost_params.seed ^ splitmix64_mix(seed));
      if (needs_mmd)
        entry.mmd_cost = build_cost_matrix(source_bank, target_bank, CostMethod::MkMmdLinear, params);
      if (needs_ot)
        entry.ot_cost = build_cost_matrix(source_bank, target_bank, CostMethod::OtDistance, params);
    }
    seed_data.push_back(std::move(entry));
  }

  // One training run; returns the report.
  const auto run_one = [&](RunKind kind, const SeedData& data, std::uint64_t seed,
                           double lambda_ot) -> TrainReport {
    TrainConfig cfg = config.train;
    cfg.seed = seed;
    switch (kind) {
      case RunKind::TargetOnly: {
        cfg.lambda_s = 0;
        cfg.lambda_ot = 0;
        return train(data.dataset.target_train, data.dataset.source, CostMatrix{}, cfg,
                     data.dataset.target_test);
      }
      case RunKind::Consecutive: {
        // Stage one trains extractor + source head on source CE; stage two
        // redraws the target head and trains on target CE alone.
        ModelParams params = seeded_init(data.dataset.target_train.features.cols(), cfg.hidden_dim,
                                         data.dataset.source.label_count,
                                         data.dataset.target_train.label_count, seed);
        TrainConfig stage = cfg;
        stage.lambda_s = 1;
        stage.lambda_ot = 0;
        params = train_source_phase(std::move(params), data.dataset.source, stage);
        reinitialize_target_head(params, seed);
        TrainConfig fine = cfg;
        fine.lambda_s = 0;
        fine.lambda_ot = 0;
        return train_from(std::move(params), data.dataset.target_train, data.dataset.source,
                          CostMatrix{}, fine, data.dataset.target_test);
      }
      case RunKind::JointNoOt: {
        cfg.lambda_ot = 0;
        return train(data.dataset.target_train, data.dataset.source, CostMatrix{}, cfg,
                     data.dataset.target_test);
      }
      case RunKind::JtlnMkMmd: {
        cfg.lambda_ot = lambda_ot;
        return train(data.dataset.target_train, data.dataset.source, data.mmd_cost, cfg,
                     data.dataset.target_test);
      }
      case RunKind::JtlnOt: {
        cfg.lambda_ot = lambda_ot;
        return train(data.dataset.target_train, data.dataset.source, data.ot_cost, cfg,
                     data.dataset.target_test);
      }
    }
    throw std::logic_error("unreachable run kind");
  };

  const auto is_jtln = [](RunKind kind) {
    return kind == RunKind::JtlnMkMmd || kind == RunKind::JtlnOt;
  };

  ExperimentResult result;
  for (const RunKind kind : config.runs) {
    const std::string name = to_string(kind);
    const std::vector<double> lambdas = is_jtln(kind) ? config.lambda_ot_values
                                                      : std::vector<double>{0.0};

    struct Candidate {
      double lambda_ot;
      std::vector<double> accuracy;
      std::vector<double> final_ot;
    };
    std::vector<Candidate> candidates;

    for (const double lambda_ot : lambdas) {
      Candidate candidate{lambda_ot, {}, {}};
      for (std::size_t si = 0; si < config.seeds.size(); ++si) {
        const std::uint64_t seed = config.seeds[si];
        std::string label = name;
        if (is_jtln(kind)) label += "_lot" + format_significant(lambda_ot, 6);
        note(label + " seed " + std::to_string(seed));

        TrainReport report;
        try {
          report = run_one(kind, seed_data[si], seed, lambda_ot);
        } catch (const NonFiniteLoss& e) {
          throw NonFiniteLoss(name + " with seed " + std::to_string(seed) + ": " + e.what());
        }
        const EpochRecord& last = report.epochs.back();
        candidate.accuracy.push_back(last.test_accuracy);
        candidate.final_ot.push_back(last.ot_loss);
        write_report_jsonl(report, config.output_dir + "/" + label + "_seed" +
                                       std::to_string(seed) + ".jsonl");
      }
      candidates.push_back(std::move(candidate));
    }

    // Best lambda_ot by mean accuracy; ties go to the earlier (smaller) value.
    std::size_t best = 0;
    for (std::size_t c = 1; c < candidates.size(); ++c) {
      if (mean(candidates[c].accuracy) > mean(candidates[best].accuracy)) best = c;
    }

    RunSummary row;
    row.run = name;
    row.seed_count = static_cast<int>(config.seeds.size());
    row.mean_accuracy = mean(candidates[best].accuracy);
    row.std_accuracy = sample_std(candidates[best].accuracy);
    row.mean_final_ot_loss = mean(candidates[best].final_ot);
    row.lambda_ot = is_jtln(kind) ? candidates[best].lambda_ot : 0.0;
    result.rows.push_back(row);
    result.per_seed_accuracy[name] = candidates[best].accuracy;
  }
  return result;
}

std::string summary_csv(const ExperimentResult& result) {
  std::string csv = "run,seed_count,mean_accuracy,std_accuracy,mean_final_ot_loss\n";
  for (const auto& row : result.rows) {
    csv += row.run + "," + std::to_string(row.seed_count) + "," +
           format_significant(row.mean_accuracy, 6) + "," +
           format_significant(row.std_accuracy, 6) + "," +
           format_significant(row.mean_final_ot_loss, 6) + "\n";
  }
  return csv;
}

void write_summary_csv(const ExperimentResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << summary_csv(result);
}

}  // namespace jtln
