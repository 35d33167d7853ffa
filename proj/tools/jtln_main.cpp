// Command-line surface: synthetic dataset generation, single transport
// solves, cost-matrix construction, and the multi-run training comparison.
//
// Exit codes: 0 success, 2 usage or invalid spec, 3 numerical failure,
// 4 cost-metric failure, 5 training failure.
#include <CLI11.hpp>

#include "jtln/dataset.hpp"
#include "jtln/experiment.hpp"
#include "jtln/io.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitMetric = 4;
constexpr int kExitTraining = 5;

int cmd_generate(const jtln::SyntheticSpec& spec, const std::string& output_dir) {
  const jtln::TransferDataset data = jtln::generate(spec);
  std::filesystem::create_directories(output_dir);
  jtln::save_labeled_set(data.target_train, output_dir + "/target_train.lset");
  jtln::save_labeled_set(data.target_test, output_dir + "/target_test.lset");
  jtln::save_labeled_set(data.source, output_dir + "/source.lset");
  std::cout << "wrote " << output_dir << "/target_train.lset, target_test.lset, source.lset\n";
  return 0;
}

int cmd_sinkhorn(const std::string& mu_path, const std::string& nu_path,
                 const std::string& cost_path, const jtln::SinkhornConfig& config,
                 const std::string& plan_out) {
  const jtln::Histogram mu = jtln::load_histogram(mu_path);
  const jtln::Histogram nu = jtln::load_histogram(nu_path);
  const jtln::CostMatrixFile cost = jtln::load_cost_matrix(cost_path);
  const jtln::OtSolution solution = jtln::sinkhorn_solve(mu, nu, cost.matrix, config);
  std::cout << "loss=" << jtln::format_significant(solution.loss, 12)
            << " iterations=" << solution.iterations_used
            << " converged=" << (solution.converged ? "true" : "false") << "\n";
  if (!plan_out.empty()) {
    jtln::save_plan(solution.plan, plan_out);
    std::cout << "plan written to " << plan_out << "\n";
  }
  return 0;
}

int cmd_cost_matrix(const std::string& source_path, const std::string& target_path,
                    const std::string& method_name, const jtln::CostMetricParams& params,
                    const std::string& out_path) {
  const jtln::CategoryBank source = jtln::bank_from_labeled_set(jtln::load_labeled_set(source_path));
  const jtln::CategoryBank target = jtln::bank_from_labeled_set(jtln::load_labeled_set(target_path));
  const jtln::CostMethod method = jtln::cost_method_from_string(method_name);

  double norm_factor = 0;
  jtln::CostMatrixFile file;
  file.matrix = jtln::build_cost_matrix(source, target, method, params, &norm_factor);
  file.normalized = norm_factor > 0;
  file.metadata["method"] = method_name;
  file.metadata["norm_factor"] = jtln::format_double(norm_factor);
  jtln::save_cost_matrix(file, out_path);
  std::cout << "wrote " << out_path << " (" << file.matrix.rows() << "x" << file.matrix.cols()
            << ", method=" << method_name << ")\n";
  return 0;
}

int cmd_experiment(const std::string& config_path, const std::string& output_dir_override) {
  jtln::ExperimentConfig config = jtln::load_experiment_config(config_path);
  if (!output_dir_override.empty()) config.output_dir = output_dir_override;
  const jtln::ExperimentResult result =
      jtln::run_experiment(config, [](const std::string& msg) { std::cerr << msg << "\n"; });
  jtln::write_summary_csv(result, config.output_dir + "/summary.csv");
  std::cout << jtln::summary_csv(result);
  std::cout << "summary written to " << config.output_dir << "/summary.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"entropy-regularized transport with joint transfer training"};
  app.require_subcommand(1);

  // generate
  auto* generate = app.add_subcommand("generate", "write a synthetic transfer dataset");
  jtln::SyntheticSpec spec;
  std::string generate_out = "data";
  generate->add_option("--seed", spec.seed, "dataset seed");
  generate->add_option("--feature-dim", spec.feature_dim, "feature dimension");
  generate->add_option("--target-categories", spec.target_categories, "number of target categories");
  generate->add_option("--source-categories", spec.source_categories, "number of source categories");
  generate->add_option("--target-train", spec.samples_per_target_train, "target training samples per category");
  generate->add_option("--target-test", spec.samples_per_target_test, "target test samples per category");
  generate->add_option("--source-samples", spec.samples_per_source, "source samples per category");
  generate->add_option("--relatedness", spec.relatedness, "fraction of source categories near a target category");
  generate->add_option("--noise-sigma", spec.noise_sigma, "sample noise scale");
  generate->add_option("--output-dir", generate_out, "output directory")->required();

  // sinkhorn
  auto* sinkhorn = app.add_subcommand("sinkhorn", "solve one entropy-regularized transport instance");
  std::string mu_path, nu_path, cost_path, plan_out;
  jtln::SinkhornConfig sk_config;
  sinkhorn->add_option("--mu", mu_path, "row-marginal histogram file")->required();
  sinkhorn->add_option("--nu", nu_path, "column-marginal histogram file")->required();
  sinkhorn->add_option("--cost", cost_path, "cost matrix file")->required();
  sinkhorn->add_option("--lambda", sk_config.lambda, "regularization sharpness");
  sinkhorn->add_option("--tol", sk_config.convergence_tol, "scaling-vector convergence tolerance");
  sinkhorn->add_option("--max-iter", sk_config.max_iterations, "sweep cap");
  sinkhorn->add_option("--clamp-eps", sk_config.clamp_epsilon, "marginal clamping floor");
  sinkhorn->add_option("--plan-out", plan_out, "write the coupling to this path");

  // cost-matrix
  auto* cost_matrix = app.add_subcommand("cost-matrix", "build a category cost matrix from two labeled sets");
  std::string cm_source, cm_target, cm_method = "ot", cm_out = "cost.txt";
  jtln::CostMetricParams cm_params;
  long cm_seed = 0;
  cost_matrix->add_option("--source", cm_source, "source labeled-set file")->required();
  cost_matrix->add_option("--target", cm_target, "target labeled-set file")->required();
  cost_matrix->add_option("--method", cm_method, "mkmmd-linear | mkmmd-squared | ot");
  cost_matrix->add_option("--seed", cm_seed, "base seed for the linear estimator's shuffles");
  cost_matrix->add_option("--shuffle-repeats", cm_params.shuffle_repeats, "linear-estimator averages per pair");
  cost_matrix->add_option("--sinkhorn-lambda", cm_params.sinkhorn.lambda, "regularization for the ot method");
  cost_matrix->add_option("-o,--output", cm_out, "output path")->required();

  // experiment
  auto* experiment = app.add_subcommand("experiment", "run the multi-arm training comparison");
  std::string exp_config, exp_out_override;
  experiment->add_option("--config", exp_config, "flat key=value config file")->required();
  experiment->add_option("--output-dir", exp_out_override, "override the config's output_dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (generate->parsed()) return cmd_generate(spec, generate_out);
    if (sinkhorn->parsed()) return cmd_sinkhorn(mu_path, nu_path, cost_path, sk_config, plan_out);
    if (cost_matrix->parsed()) {
      cm_params.seed = static_cast<std::uint64_t>(cm_seed);
      return cmd_cost_matrix(cm_source, cm_target, cm_method, cm_params, cm_out);
    }
    if (experiment->parsed()) return cmd_experiment(exp_config, exp_out_override);
  } catch (const jtln::NumericalUnderflow& e) {
    std::cerr << "numerical failure: " << e.what() << "\n"
              << "hint: reduce --lambda or rescale the cost matrix to [0,1]\n";
    return kExitNumerical;
  } catch (const jtln::PairMetricError& e) {
    std::cerr << "cost-metric failure: " << e.what() << "\n";
    return kExitMetric;
  } catch (const jtln::NonFiniteLoss& e) {
    std::cerr << "training failure: " << e.what() << "\n";
    return kExitTraining;
  } catch (const jtln::InvalidSpec& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return 0;
}
