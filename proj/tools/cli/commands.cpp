#include "commands.hpp"

#include "run_config.hpp"
#include "svg.hpp"

#include "stmd/eval.hpp"
#include "stmd/oracles.hpp"
#include "stmd/sample.hpp"
#include "stmd/serialize.hpp"
#include "stmd/train.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace stmd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

/// Progress messages go to stderr; the same lines with timestamps go to run.log when one is open.
class RunLog {
 public:
  void open(const fs::path& path) { file_.open(path, std::ios::app); }
  void line(const std::string& text) {
    std::cerr << "[stmd] " << text << '\n';
    if (file_) file_ << utc_timestamp() << ' ' << text << '\n' << std::flush;
  }

 private:
  std::ofstream file_;
};

void log_lines(RunLog& log, const std::string& block) {
  std::istringstream in(block);
  std::string line;
  while (std::getline(in, line)) log.line(line);
}

json config_with_overrides(const std::string& path, const std::vector<std::string>& overrides, RunLog& log) {
  json root = load_json_file(path);
  std::ostringstream changes;
  for (const std::string& o : overrides) apply_override(root, o, changes);
  log_lines(log, changes.str());
  return root;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

fs::path default_output_dir(const std::optional<std::string>& flag, const std::string& checkpoint) {
  if (flag) return *flag;
  const fs::path parent = fs::path(checkpoint).parent_path();
  return parent.empty() ? fs::path(".") : parent;
}

std::string checkpoint_name(const char* prefix, std::int64_t step) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%08lld.ckpt", prefix, static_cast<long long>(step));
  return buf;
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    int value = 0;
    try {
      value = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ConfigError(std::string(what) + ": '" + item + "' is not an integer");
    out.push_back(value);
  }
  if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
  return out;
}

}  // namespace

std::vector<std::vector<double>> parse_matrix(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::stringstream in(text);
  std::string row_text;
  while (std::getline(in, row_text, ';')) {
    std::vector<double> row;
    std::stringstream row_in(row_text);
    std::string item;
    while (std::getline(row_in, item, ',')) {
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(item, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != item.size()) throw ConfigError("'" + item + "' is not a number in '" + text + "'");
      row.push_back(value);
    }
    if (row.empty()) throw ConfigError("empty row in '" + text + "'");
    if (!rows.empty() && row.size() != rows.front().size()) throw ConfigError("ragged rows in '" + text + "'");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("empty matrix");
  return rows;
}

int cmd_train(const TrainArgs& args) {
  RunLog log;
  const json root = config_with_overrides(args.config_path, args.overrides, log);
  RunConfig cfg = parse_run_config(root);
  if (args.output_dir) cfg.output_dir = *args.output_dir;
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  log.open(out / "run.log");
  log.line("train: config " + args.config_path + ", output " + out.string());
  for (const std::string& o : args.overrides) log.line("flag --set " + o);
  write_text(out / "config.json", to_json(cfg).dump(2) + "\n");

  Checkpoint ck;
  if (args.resume) {
    ck = load_checkpoint(*args.resume);
    if (stmd::to_json(ck.net) != stmd::to_json(cfg.network)) {
      throw ConfigError("resume: the checkpoint network differs from the config");
    }
    if (ck.train.objective != cfg.train.objective) throw ConfigError("resume: the checkpoint objective differs");
    ck.train = cfg.train;
    log.line("resuming from " + *args.resume + " at step " + std::to_string(ck.state.step));
  } else {
    ck = Checkpoint{cfg.schedule, cfg.network, cfg.train, cfg.dataset, TrainState::create(cfg.network, cfg.train)};
  }

  const fs::path metrics_path = out / "metrics.csv";
  const bool append = args.resume.has_value() && fs::exists(metrics_path) && fs::file_size(metrics_path) > 0;
  std::FILE* metrics = std::fopen(metrics_path.c_str(), append ? "ab" : "wb");
  if (metrics == nullptr) throw FormatError("cannot open '" + metrics_path.string() + "'");
  if (!append) std::fprintf(metrics, "step,raw_loss,weighted_loss,grad_norm,wallclock\n");
  const auto start = std::chrono::steady_clock::now();

  TrainHooks hooks;
  hooks.on_log = [&](const TrainState& st, const LossBreakdown& loss) {
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::fprintf(metrics, "%lld,%.17g,%.17g,%.17g,%.3f\n", static_cast<long long>(st.step), loss.raw_loss,
                 loss.weighted_loss, loss.grad_norm, elapsed);
    std::fflush(metrics);
  };
  hooks.on_checkpoint = [&](const TrainState& st) {
    const fs::path path = out / checkpoint_name("ckpt_step", st.step);
    save_checkpoint(Checkpoint{ck.schedule, ck.net, ck.train, ck.dataset, st}, path.string());
    log.line("checkpoint " + path.string());
  };

  try {
    train(ck.state, ck.train, ck.schedule, ck.dataset, hooks);
  } catch (const NumericError& e) {
    std::fclose(metrics);
    const fs::path path = out / checkpoint_name("snapshot_step", ck.state.step);
    save_checkpoint(ck, path.string());
    log.line(std::string("numeric failure: ") + e.what());
    log.line("snapshot of the last good state: " + path.string());
    return kNumericError;
  }
  std::fclose(metrics);
  const fs::path final_path = out / "final.ckpt";
  save_checkpoint(ck, final_path.string());
  log.line("finished " + std::to_string(ck.state.step) + " steps (" + to_string(ck.train.objective) + ")");
  std::cout << "final checkpoint: " << final_path.string() << '\n';
  return kSuccess;
}

int cmd_sample(const SampleArgs& args) {
  const Checkpoint ck = load_checkpoint(args.checkpoint);
  SamplerSpec spec;
  if (args.n_inf) spec.n_inf = *args.n_inf;
  if (args.n_mf) spec.n_mf = *args.n_mf;
  spec.seed = args.seed;
  spec.validate();
  if (args.n < 1) throw ConfigError("--n must be positive");
  const MlpNet net = args.raw_params ? ck.state.net : ck.state.ema_net();
  const Objective objective = ck.train.objective;

  Batch x;
  const bool inpaint = args.mask.has_value() || args.observation.has_value();
  double residual = 0.0;
  if (inpaint) {
    if (!args.mask || !args.observation) throw ConfigError("inpainting needs both --mask and --observation");
    if (objective != Objective::stmd) throw ConfigError("inpainting requires an stmd checkpoint");
    const auto rows = parse_matrix(*args.mask);
    const auto y_rows = parse_matrix(*args.observation);
    Eigen::MatrixXd mask(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < rows[i].size(); ++j) mask(i, j) = rows[i][j];
    }
    std::vector<double> y_values;
    for (const auto& r : y_rows) y_values.insert(y_values.end(), r.begin(), r.end());
    if (mask.cols() != net.dim()) {
      throw ConfigError("--mask has " + std::to_string(mask.cols()) + " columns, data dimension is " +
                        std::to_string(net.dim()));
    }
    const LinearObservation obs(mask, Eigen::Map<const Vec>(y_values.data(), static_cast<Eigen::Index>(y_values.size())));
    x = stmd_inpaint(net, ck.schedule, spec, obs, args.n);
    residual = obs.residual_inf(x);
    if (!(residual <= 1e-8)) throw NumericError("inpainting residual " + std::to_string(residual) + " exceeds 1e-8");
  } else {
    x = sample_trained(net, objective, ck.schedule, spec, args.n);
  }

  const fs::path out = default_output_dir(args.output_dir, args.checkpoint);
  fs::create_directories(out);
  char stem[160];
  std::snprintf(stem, sizeof stem, "samples_%s_ninf%d_nmf%d_seed%llu%s", to_string(objective), spec.n_inf, spec.n_mf,
                static_cast<unsigned long long>(spec.seed), inpaint ? "_inpaint" : "");
  const fs::path csv = out / (std::string(stem) + ".csv");
  write_points_csv(csv.string(), x);
  std::cout << "NFE: " << spec.nfe() << '\n';
  if (inpaint) std::cout << "max |Mx - y|: " << residual << '\n';
  std::cout << "wrote " << csv.string() << " (" << x.cols() << " rows)\n";
  if (x.rows() == 2) {
    const fs::path svg = out / (std::string(stem) + ".svg");
    write_scatter_svg(svg.string(), x, stem);
    std::cout << "wrote " << svg.string() << '\n';
  }
  return kSuccess;
}

int cmd_eval(const EvalArgs& args) {
  if (args.checkpoints.empty()) throw ConfigError("eval needs at least one --checkpoint");
  RunLog log;
  EvalSettings settings;
  std::optional<DatasetSpec> dataset;
  if (args.config_path) {
    const RunConfig cfg = parse_run_config(config_with_overrides(*args.config_path, args.overrides, log));
    settings = cfg.eval;
    dataset = cfg.dataset;
  } else if (!args.overrides.empty()) {
    throw ConfigError("--set needs --config");
  }
  if (args.n) settings.n = *args.n;
  if (args.replicates) settings.replicates = *args.replicates;
  if (args.nfe) settings.nfe = parse_int_list(*args.nfe, "--nfe");
  if (args.seed) settings.seed = *args.seed;
  settings.validate();
  const auto wants = [&](const char* metric) {
    return std::find(settings.metrics.begin(), settings.metrics.end(), metric) != settings.metrics.end();
  };

  std::ostringstream csv;
  csv << "checkpoint,objective,nfe,n_inf,n_mf,n,replicates,w2,w2_se,w2_debiased,w2_raw,w2_raw_se,energy\n";
  std::cout << std::left << std::setw(10) << "objective" << std::setw(6) << "nfe" << std::setw(14) << "w2"
            << std::setw(12) << "w2_se" << std::setw(14) << "w2_raw" << "energy\n";
  for (const std::string& path : args.checkpoints) {
    const Checkpoint ck = load_checkpoint(path);
    const DatasetSpec data = dataset.value_or(ck.dataset);
    require_shape(data.dim == ck.net.dim, "eval: dataset and checkpoint dimensions differ");
    const MlpNet net = ck.state.ema_net();
    const Objective objective = ck.train.objective;
    double first_w2 = 0.0, first_se = 0.0, last_w2 = 0.0, last_se = 0.0;
    for (std::size_t k = 0; k < settings.nfe.size(); ++k) {
      const int nfe = settings.nfe[k];
      const SamplerSpec base = sampler_for_nfe(nfe, 0);
      const BatchSampler model = [&](Eigen::Index n, Rng& rng) {
        SamplerSpec spec = base;
        spec.seed = rng();
        return sample_trained(net, objective, ck.schedule, spec, n);
      };
      const BatchSampler truth = [&](Eigen::Index n, Rng& rng) { return sample_dataset(data, n, rng); };
      W2Estimate w2;
      if (wants("w2")) w2 = w2_debiased(model, truth, settings.n, settings.replicates, settings.seed);
      double energy = std::numeric_limits<double>::quiet_NaN();
      if (wants("energy")) {
        Rng rng(derive_seed(settings.seed, 1000 + static_cast<std::uint64_t>(nfe)));
        const Batch a = model(settings.n, rng);
        const Batch b = truth(settings.n, rng);
        energy = energy_distance(a, b);
      }
      const double w2_clamped = std::max(0.0, w2.value);
      if (k == 0) {
        first_w2 = w2.value;
        first_se = w2.std_error;
      }
      last_w2 = w2.value;
      last_se = w2.std_error;
      char row[512];
      std::snprintf(row, sizeof row, "%s,%s,%d,%d,%d,%ld,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", path.c_str(),
                    to_string(objective), nfe, base.n_inf, base.n_mf, static_cast<long>(settings.n),
                    settings.replicates, w2_clamped, w2.std_error, w2.value, w2.raw, w2.raw_std_error, energy);
      csv << row;
      std::cout << std::left << std::setw(10) << to_string(objective) << std::setw(6) << nfe << std::setw(14)
                << w2_clamped << std::setw(12) << w2.std_error << std::setw(14) << w2.raw << energy << '\n';
    }
    if (wants("w2") && settings.nfe.size() > 1) {
      const bool trend = last_w2 <= first_w2 + 3.0 * std::hypot(first_se, last_se);
      std::cout << path << ": W2 at NFE " << settings.nfe.back() << " <= W2 at NFE " << settings.nfe.front()
                << " + 3 se: " << (trend ? "yes" : "no") << '\n';
    }
  }
  const fs::path out = default_output_dir(args.output_dir, args.checkpoints.front());
  fs::create_directories(out);
  write_text(out / "eval.csv", csv.str());
  std::cout << "wrote " << (out / "eval.csv").string() << '\n';
  return kSuccess;
}

int cmd_verify_bounds(const BoundsArgs& args) {
  if (args.analytic == args.checkpoint.has_value()) {
    throw ConfigError("verify-bounds needs exactly one of --checkpoint or --analytic");
  }
  if (args.n < 2 || args.n > kMaxAssignmentSize) {
    throw ConfigError("--n must lie in [2, " + std::to_string(kMaxAssignmentSize) + "]");
  }
  BoundCheckConfig bc;
  bc.n = args.n;
  bc.replicates = args.replicates;
  bc.epsilon.grid = args.grid;
  bc.epsilon.draws = args.draws;
  bc.epsilon.seed = derive_seed(args.seed, 10);
  bc.lipschitz.pairs = args.pairs;
  bc.lipschitz.seed = derive_seed(args.seed, 11);
  bc.seed = derive_seed(args.seed, 12);
  if (bc.replicates < 2) throw ConfigError("--replicates must be >= 2");
  bc.epsilon.validate();

  RunLog log;
  std::optional<RunConfig> cfg;
  if (args.config_path) cfg = parse_run_config(config_with_overrides(*args.config_path, args.overrides, log));
  else if (!args.overrides.empty()) throw ConfigError("--set needs --config");

  std::vector<BoundReport> reports;
  int dim = 0;
  fs::path out = args.output_dir ? fs::path(*args.output_dir) : fs::path(".");
  if (args.analytic) {
    const DatasetSpec data = cfg ? cfg->dataset : DatasetSpec::gaussian(2, 2.0);
    const NoiseSchedule sched = cfg ? cfg->schedule : NoiseSchedule{};
    const auto mix = data.as_mixture();
    if (data.kind != DatasetSpec::Kind::gaussian || !mix) {
      throw ConfigError("analytic mode needs a gaussian dataset");
    }
    dim = data.dim;
    const Vec mean = mix->means.front();
    const double scale = mix->scales.front();
    const GaussianMeanFlowField uncond(GaussianFlow{mean, scale});
    const GaussianPosteriorField cond(sched, mean, scale);
    reports.push_back(check_theorem1(uncond, data, bc));
    reports.push_back(check_corollary1(cond, sched, data, 0.5, Vec::Zero(mean.size()), bc));
    reports.push_back(check_corollary2(cond, sched, data, bc));
  } else {
    const Checkpoint ck = load_checkpoint(*args.checkpoint);
    out = default_output_dir(args.output_dir, *args.checkpoint);
    const DatasetSpec data = cfg ? cfg->dataset : ck.dataset;
    const MlpNet net = ck.state.ema_net();
    dim = data.dim;
    switch (ck.train.objective) {
      case Objective::meanflow:
        reports.push_back(check_theorem1(net, data, bc));
        break;
      case Objective::stmd:
        reports.push_back(check_corollary2(net, ck.schedule, data, bc));
        if (data.kind == DatasetSpec::Kind::gaussian) {
          reports.push_back(check_corollary1(net, ck.schedule, data, 0.5, Vec::Zero(data.dim), bc));
        }
        break;
      default:
        throw ConfigError("bounds apply to mean-flow models (stmd or meanflow checkpoints)");
    }
  }

  fs::create_directories(out);
  std::string csv = bound_report_csv_header();
  std::string text;
  bool all = true;
  for (const BoundReport& r : reports) {
    csv += to_csv_row(r);
    text += to_text(r);
    all = all && r.satisfied;
    if (r.name == "corollary2" && r.epsilon_hat > 0.0) {
      const double threshold = alpha1_threshold(r.m2, dim, r.epsilon_hat);
      std::ostringstream os;
      os << "  alpha_1 = " << r.alpha1 << ", threshold for eps_1 = " << r.epsilon_hat << ": " << threshold
         << (r.alpha1 <= threshold ? " (alpha_1 below threshold)" : " (alpha_1 above threshold)") << '\n';
      text += os.str();
    }
  }
  write_text(out / "bounds.csv", csv);
  write_text(out / "bounds.txt", text);
  std::cout << text << "all bounds satisfied: " << (all ? "yes" : "no") << '\n';
  return all ? kSuccess : kCheckFailed;
}

int cmd_threshold(const ThresholdArgs& args) {
  const double a = alpha1_threshold(args.m2, args.d, args.eps1);
  std::printf("alpha1_threshold(m2=%.17g, d=%d, eps1=%.17g) = %.17g\n", args.m2, args.d, args.eps1, a);
  std::printf("alpha1^2 m2 + alpha1^4 d = %.17g\n", a * a * args.m2 + a * a * a * a * args.d);
  return kSuccess;
}

int cmd_check_grads(const GradsArgs& args) {
  if (args.nets < 1) throw ConfigError("--nets must be positive");
  const FdReport r = jvp_fd_suite(args.nets, args.tol, args.seed);
  std::printf("nets: %d\nmax jvp rel err: %.3e\nmax grad rel err: %.3e\nmax vjp rel err: %.3e\nmax |du| for zero tangent: %.3e\n"
              "tolerance: %.1e\npassed: %s\n",
              r.nets, r.max_jvp_rel_err, r.max_grad_rel_err, r.max_vjp_rel_err, r.max_zero_tangent, args.tol,
              r.passed ? "yes" : "no");
  return r.passed ? kSuccess : kCheckFailed;
}

}  // namespace stmd::cli
