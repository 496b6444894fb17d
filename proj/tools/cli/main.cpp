#include "commands.hpp"

#include "stmd/common.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>

using namespace stmd::cli;

int main(int argc, char** argv) {
  CLI::App app{"Stochastic transition-map distillation: train, sample, evaluate and verify bounds"};
  app.require_subcommand(1);
  std::function<int()> run;

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a JSON run config");
  train_cmd->add_option("config", train.config_path, "Run config (JSON)")->required();
  train_cmd->add_option("--set", train.overrides, "Override a config key, e.g. train.iterations=100");
  train_cmd->add_option("--out", train.output_dir, "Output directory (overrides output_dir)");
  train_cmd->add_option("--resume", train.resume, "Continue from a checkpoint");
  train_cmd->callback([&] { run = [&] { return cmd_train(train); }; });

  SampleArgs sample;
  auto* sample_cmd = app.add_subcommand("sample", "Draw samples from a checkpoint");
  sample_cmd->add_option("--checkpoint", sample.checkpoint, "Checkpoint file")->required();
  sample_cmd->add_option("--n-inf", sample.n_inf, "Outer diffusion steps (default 4)");
  sample_cmd->add_option("--n-mf", sample.n_mf, "Mean-flow steps per outer step (default 2)");
  sample_cmd->add_option("--n", sample.n, "Number of samples")->capture_default_str();
  sample_cmd->add_option("--seed", sample.seed, "Sampler seed")->capture_default_str();
  sample_cmd->add_option("--mask", sample.mask, "Observation matrix M, rows separated by ';', e.g. \"1,0\"");
  sample_cmd->add_option("--observation", sample.observation, "Observed values y, e.g. \"0.5\"");
  sample_cmd->add_option("--out", sample.output_dir, "Output directory (default: next to the checkpoint)");
  sample_cmd->add_flag("--raw-params", sample.raw_params, "Use the live parameters instead of the EMA");
  sample_cmd->callback([&] { run = [&] { return cmd_sample(sample); }; });

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Metric-vs-NFE table against held-out data");
  eval_cmd->add_option("--checkpoint", eval.checkpoints, "Checkpoint file (repeatable)")->required();
  eval_cmd->add_option("--config", eval.config_path, "Run config supplying the eval section and dataset");
  eval_cmd->add_option("--set", eval.overrides, "Override a config key");
  eval_cmd->add_option("--n", eval.n, "Samples per set (default 2048)");
  eval_cmd->add_option("--replicates", eval.replicates, "W2 replicates (default 4)");
  eval_cmd->add_option("--nfe", eval.nfe, "Comma-separated NFE budgets (default 1,2,4,8)");
  eval_cmd->add_option("--seed", eval.seed, "Evaluation seed");
  eval_cmd->add_option("--out", eval.output_dir, "Output directory (default: next to the first checkpoint)");
  eval_cmd->callback([&] { run = [&] { return cmd_eval(eval); }; });

  BoundsArgs bounds;
  auto* bounds_cmd = app.add_subcommand("verify-bounds", "Check the Wasserstein bounds numerically");
  bounds_cmd->add_option("--checkpoint", bounds.checkpoint, "Trained stmd or meanflow checkpoint");
  bounds_cmd->add_flag("--analytic", bounds.analytic, "Use exact Gaussian oracles instead of a checkpoint");
  bounds_cmd->add_option("--config", bounds.config_path, "Run config supplying dataset and schedule");
  bounds_cmd->add_option("--set", bounds.overrides, "Override a config key");
  bounds_cmd->add_option("--n", bounds.n, "Samples per W2 set")->capture_default_str();
  bounds_cmd->add_option("--replicates", bounds.replicates, "W2 replicates")->capture_default_str();
  bounds_cmd->add_option("--grid", bounds.grid, "Quadrature nodes in s")->capture_default_str();
  bounds_cmd->add_option("--draws", bounds.draws, "Draws per node")->capture_default_str();
  bounds_cmd->add_option("--pairs", bounds.pairs, "Lipschitz probe pairs")->capture_default_str();
  bounds_cmd->add_option("--seed", bounds.seed, "Seed")->capture_default_str();
  bounds_cmd->add_option("--out", bounds.output_dir, "Output directory for bounds.csv and bounds.txt");
  ThresholdArgs threshold;
  auto* threshold_cmd = bounds_cmd->add_subcommand("threshold", "Largest alpha_1 with alpha_1^2 m2 + alpha_1^4 d <= eps1");
  threshold_cmd->add_option("--m2", threshold.m2, "Data second moment")->required();
  threshold_cmd->add_option("--d", threshold.d, "Dimension")->required();
  threshold_cmd->add_option("--eps1", threshold.eps1, "Residual error eps_1")->required();
  threshold_cmd->callback([&] { run = [&] { return cmd_threshold(threshold); }; });
  bounds_cmd->callback([&] {
    if (!threshold_cmd->parsed()) run = [&] { return cmd_verify_bounds(bounds); };
  });

  GradsArgs grads;
  auto* grads_cmd = app.add_subcommand("check-grads", "Finite-difference check of JVPs and gradients");
  grads_cmd->add_option("--nets", grads.nets, "Random networks")->capture_default_str();
  grads_cmd->add_option("--tol", grads.tol, "Relative error tolerance")->capture_default_str();
  grads_cmd->add_option("--seed", grads.seed, "Seed")->capture_default_str();
  grads_cmd->callback([&] { run = [&] { return cmd_check_grads(grads); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    return run();
  } catch (const stmd::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const stmd::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kCheckFailed;
  }
}
