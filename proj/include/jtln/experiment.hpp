#pragma once

#include "jtln/cost_metrics.hpp"
#include "jtln/dataset.hpp"
#include "jtln/network.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace jtln {

// The five comparison arms: target-only fine-tuning, two-stage source-then-
// target fine-tuning, joint training without the transport penalty, and the
// penalized variants under each cost metric.
enum class RunKind { TargetOnly, Consecutive, JointNoOt, JtlnMkMmd, JtlnOt };

std::string to_string(RunKind kind);
RunKind run_kind_from_string(const std::string& name);

struct ExperimentConfig {
  SyntheticSpec data;  // per-seed synthetic data unless the paths below are set
  std::string target_train_path;
  std::string target_test_path;
  std::string source_path;

  std::vector<RunKind> runs{RunKind::TargetOnly, RunKind::Consecutive, RunKind::JointNoOt,
                            RunKind::JtlnMkMmd, RunKind::JtlnOt};
  std::vector<std::uint64_t> seeds{1};
  TrainConfig train;
  std::vector<double> lambda_ot_values{0.1, 1.0};  // swept for the jtln runs
  CostMetricParams cost_params;
  std::string output_dir = "out";

  void validate() const;
};

// Flat key=value text file; '#' starts a comment. Unknown keys are rejected.
ExperimentConfig load_experiment_config(const std::string& path);

struct RunSummary {
  std::string run;
  int seed_count = 0;
  double mean_accuracy = 0;
  double std_accuracy = 0;        // sample standard deviation
  double mean_final_ot_loss = 0;  // 0 for runs without a transport term
  double lambda_ot = 0;           // chosen weight for the jtln runs
};

struct ExperimentResult {
  std::vector<RunSummary> rows;  // in config order
  // Final test accuracy per seed for each run (at the chosen lambda_ot).
  std::map<std::string, std::vector<double>> per_seed_accuracy;
};

// Trains every configured run across all seeds, writes one JSONL metrics
// stream per (run, seed) into output_dir, and returns the summary. For the
// jtln runs every lambda_ot value is trained and the best mean accuracy wins.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::function<void(const std::string&)>& progress = {});

std::string summary_csv(const ExperimentResult& result);
void write_summary_csv(const ExperimentResult& result, const std::string& path);

}  // namespace jtln
