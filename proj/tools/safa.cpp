#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "safa/checkpoint.hpp"
#include "safa/config.hpp"
#include "safa/energy.hpp"
#include "safa/errors.hpp"
#include "safa/fscil.hpp"
#include "safa/hash.hpp"
#include "safa/results.hpp"
#include "safa/zo.hpp"

namespace fs = std::filesystem;
using namespace safa;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kDiverged = 3, kMismatch = 4, kProtocol = 5, kCheckFailed = 6 };

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool canonical = false;
  std::string dump_predictions;
  std::vector<std::string> overrides;
  std::optional<double> alpha;
  std::optional<int> passes;
  std::optional<double> theta_init;
  std::optional<int> update_sign;
  bool no_floor = false;
  bool zo_mask = false;
  bool prefix_mask = false;
  bool index_order = false;
};

class Clock {
 public:
  void lap(const std::string& phase) {
    const auto now = std::chrono::steady_clock::now();
    laps_.emplace_back(phase, std::chrono::duration<double>(now - last_).count());
    last_ = now;
  }
  const std::vector<std::pair<std::string, double>>& laps() const { return laps_; }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
  std::vector<std::pair<std::string, double>> laps_;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

ExperimentConfig resolve_config(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
  for (const auto& o : g.overrides) apply_override(cfg, o);
  if (g.seed) cfg.seed = *g.seed;
  if (g.alpha) cfg.fscil.alpha = *g.alpha;
  if (g.passes) cfg.fscil.thresholds.adapt.passes = *g.passes;
  if (g.theta_init) cfg.network.lif.theta_init = *g.theta_init;
  if (g.update_sign) cfg.fscil.thresholds.sign = *g.update_sign;
  if (g.no_floor) cfg.fscil.thresholds.floor.reset();
  if (g.zo_mask) cfg.train.zo.mask_gradients = true;
  if (g.prefix_mask) cfg.network.prefix_mask = true;
  if (g.index_order) cfg.dataset.index_order = true;
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("short write to " + path.string());
}

void dump_predictions(const Globals& g, const std::vector<Evaluation>& evals) {
  if (g.dump_predictions.empty()) return;
  std::ostringstream os;
  write_predictions_csv(os, evals);
  write_text(g.dump_predictions, os.str());
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_extension();
  out += suffix;
  return out;
}

void print_session(const SessionMetrics& m) {
  std::cout << "session " << m.session << ": classes " << m.classes_seen << ", accuracy " << fmt(m.accuracy)
            << ", base " << fmt(m.base_accuracy);
  if (m.novel_accuracy) std::cout << ", novel " << fmt(*m.novel_accuracy);
  if (m.hacc) std::cout << ", hacc " << fmt(*m.hacc);
  std::cout << ", firing rate " << fmt(m.mean_rate) << "\n";
}

void require_compatible(const ModelCheckpoint& ck, const ExperimentConfig& cfg) {
  if (ck.fingerprint != cfg.fingerprint())
    throw CheckpointMismatchError("checkpoint fingerprint " + to_hex(ck.fingerprint) +
                                  " does not match the configuration (" + to_hex(cfg.fingerprint()) + ")");
}

int cmd_train_base(const Globals& g, const std::string& results_path) {
  if (g.out.empty()) throw ConfigError("--out", "train-base needs a checkpoint path");
  Clock clock;
  const auto cfg = resolve_config(g);
  const auto stream = make_stream(cfg);
  validate_stream(stream);
  clock.lap("setup");

  TrainLog log;
  auto ck = train_base_checkpoint(stream, cfg.experiment(), &log);
  ck.fingerprint = cfg.fingerprint();
  ck.config_snapshot = cfg.canonical_text();
  clock.lap("train");

  const auto& d = stream.data;
  const auto B = stream.base.classes.size();
  auto ev = evaluate(ck.net, ck.timesteps, ck.bank, d.test_x, d.test_y, stream.base.test, B);
  const double readout_acc = readout_accuracy(ck.net, ck.timesteps, d.test_x, d.test_y, stream.base.test);
  clock.lap("evaluate");

  save_checkpoint(g.out, ck);

  ResultsDocument doc;
  doc.command = "train-base";
  doc.config_text = ck.config_snapshot;
  doc.fingerprint = ck.fingerprint;
  doc.seed = cfg.seed;
  doc.train = log;
  doc.readout_test_accuracy = readout_acc;
  doc.results.sessions.push_back(ev.metrics);
  doc.results.seed = cfg.seed;
  doc.results.config_fingerprint = ck.fingerprint;
  doc.weight_hashes.push_back(weights_hash(ck.net));
  clock.lap("write");
  doc.wall_clock_s = clock.laps();
  const fs::path rp = results_path.empty() ? sibling(g.out, ".results.json") : fs::path(results_path);
  write_text(rp, results_json(doc, g.canonical));
  dump_predictions(g, {ev});

  std::cout << "trained " << log.epoch_loss.size() << " epochs, final loss " << fmt(log.epoch_loss.back())
            << ", train accuracy " << fmt(log.train_accuracy) << ", readout test accuracy " << fmt(readout_acc)
            << "\n";
  print_session(ev.metrics);
  std::cout << "checkpoint " << g.out << "\nresults " << rp.string() << "\n";
  return kOk;
}

int cmd_run_incremental(const Globals& g, const std::string& checkpoint, const std::string& save_final) {
  if (g.out.empty()) throw ConfigError("--out", "run-incremental needs a results path");
  Clock clock;
  const auto cfg = resolve_config(g);
  auto ck = load_checkpoint(checkpoint);
  require_compatible(ck, cfg);
  const auto stream = make_stream(cfg);
  clock.lap("setup");

  auto run = run_incremental(std::move(ck), stream, cfg.fscil);
  clock.lap("incremental");

  const auto report = energy_report(run.energy_profiles);
  ResultsDocument doc;
  doc.command = "run-incremental";
  doc.config_text = cfg.canonical_text();
  doc.fingerprint = cfg.fingerprint();
  doc.seed = cfg.seed;
  doc.results = run.results;
  doc.weight_hashes = run.weight_hashes;
  doc.energy = report;

  const fs::path out = g.out;
  std::ostringstream csv;
  write_session_csv(csv, run.results);
  write_text(sibling(out, ".csv"), csv.str());
  std::ostringstream prof;
  write_profile_csv(prof, run.energy_profiles);
  write_text(sibling(out, ".energy.csv"), prof.str());
  if (!save_final.empty()) {
    run.final_state.config_snapshot = doc.config_text;
    save_checkpoint(save_final, run.final_state);
  }
  dump_predictions(g, run.evaluations);
  clock.lap("write");
  doc.wall_clock_s = clock.laps();
  write_text(out, results_json(doc, g.canonical));

  for (const auto& m : run.results.sessions) print_session(m);
  const auto acc = run.results.accuracies();
  const auto ad = avg_and_delta_last(acc, acc.front());
  std::cout << "average accuracy " << fmt(ad.avg) << ", final " << fmt(acc.back()) << "\n";
  std::cout << "energy: snn " << report.total_snn_pj << " pJ, ann " << report.total_ann_pj << " pJ per sample\n";
  std::cout << "results " << out.string() << "\n";
  return kOk;
}

int cmd_evaluate(const Globals& g, const std::string& checkpoint) {
  if (g.out.empty()) throw ConfigError("--out", "evaluate needs a results path");
  Clock clock;
  const auto cfg = resolve_config(g);
  const auto ck = load_checkpoint(checkpoint);
  require_compatible(ck, cfg);
  const auto stream = make_stream(cfg);
  if (ck.session > stream.incremental.size())
    throw CheckpointMismatchError("checkpoint is at session " + std::to_string(ck.session) + " but the stream has " +
                                  std::to_string(stream.incremental.size()) + " incremental sessions");
  if (ck.bank.classes() != stream.seen_classes(ck.session))
    throw CheckpointMismatchError("checkpoint holds " + std::to_string(ck.bank.classes()) +
                                  " prototypes, session expects " + std::to_string(stream.seen_classes(ck.session)));
  std::vector<std::size_t> rows = stream.base.test;
  for (std::size_t s = 0; s < ck.session; ++s)
    rows.insert(rows.end(), stream.incremental[s].test.begin(), stream.incremental[s].test.end());
  if (rows.empty()) throw ConfigError("dataset.test_per_class", "the test set is empty");
  clock.lap("setup");

  const auto& d = stream.data;
  auto ev = evaluate(ck.net, ck.timesteps, ck.bank, d.test_x, d.test_y, rows, stream.base.classes.size());
  ev.metrics.session = ck.session;
  clock.lap("evaluate");

  ResultsDocument doc;
  doc.command = "evaluate";
  doc.config_text = cfg.canonical_text();
  doc.fingerprint = cfg.fingerprint();
  doc.seed = cfg.seed;
  doc.results.sessions.push_back(ev.metrics);
  doc.results.seed = cfg.seed;
  doc.results.config_fingerprint = doc.fingerprint;
  doc.weight_hashes.push_back(weights_hash(ck.net));
  dump_predictions(g, {ev});
  doc.wall_clock_s = clock.laps();
  write_text(g.out, results_json(doc, g.canonical));
  print_session(ev.metrics);
  return kOk;
}

struct GradCheckOptions {
  bool self_test = false;
  std::size_t expectation_draws = 1000000;
  std::size_t variance_trials = 100000;
};

int cmd_grad_check(const Globals& g, const GradCheckOptions& opt) {
  const auto cfg = resolve_config(g);
  const std::vector<double> us = {0.0, 0.125, -0.125, 0.25, -0.25, 0.5, -0.5, 1.0, -1.0};
  const std::vector<double> deltas = {0.25, 0.5, 1.0};
  const std::vector<std::size_t> one = {1};
  const std::vector<std::size_t> bs = {1, 2, 4, 8, 16};
  const std::vector<double> zero = {0.0};

  RngStream rng = RngStream(cfg.seed, streams::kZo).fork(7);
  auto expect_rows = estimator_mse_profile(us, deltas, one, opt.expectation_draws, rng);
  auto var_rows = estimator_mse_profile(zero, deltas, bs, opt.variance_trials, rng);

  // Self-test: a deliberately wrong width in the closed form must be caught.
  const double width = opt.self_test ? 1.5 : 1.0;
  for (auto* rows : {&expect_rows, &var_rows})
    for (auto& r : *rows) {
      r.closed_form = gaussian_surrogate(r.u, r.delta * width);
      r.abs_bias = std::abs(r.mean - r.closed_form);
    }

  int failures = 0;
  auto report = [&](bool ok, const std::string& what) {
    std::cout << (ok ? "PASS " : "FAIL ") << what << "\n";
    failures += ok ? 0 : 1;
  };
  auto tuple = [](const MseProfileRow& r, double got, double want) {
    std::ostringstream os;
    os << "(u=" << r.u << ", delta=" << r.delta << ", b=" << r.b << ", got=" << got << ", want=" << want << ")";
    return os.str();
  };

  for (const auto& r : expect_rows)
    report(r.abs_bias <= 1e-2, "expectation " + tuple(r, r.mean, r.closed_form) + " tol 1e-2");

  auto var_at = [&](double delta, std::size_t b) {
    for (const auto& r : var_rows)
      if (r.delta == delta && r.b == b) return r;
    throw std::logic_error("grid point missing");
  };
  for (double delta : deltas)
    for (std::size_t i = 0; i + 1 < bs.size(); ++i) {
      const auto lo = var_at(delta, bs[i]);
      const auto hi = var_at(delta, bs[i + 1]);
      const double want = lo.variance / 2.0;
      report(std::abs(hi.variance - want) <= 0.2 * want, "variance halving " + tuple(hi, hi.variance, want) + " tol 20%");
    }
  for (std::size_t b : bs) {
    const auto a = var_at(0.25, b), m = var_at(0.5, b), c = var_at(1.0, b);
    report(a.variance > m.variance && m.variance > c.variance,
           "variance decreasing in delta " + tuple(c, c.variance, m.variance));
  }
  {
    const auto r = var_at(0.5, 1);
    const double want = var_at(0.25, 1).variance * (0.25 * 0.25) / (0.5 * 0.5);
    report(std::abs(r.variance - want) <= 0.3 * want, "1/(4 delta^2 b) trend " + tuple(r, r.variance, want) + " tol 30%");
  }

  if (!g.out.empty()) {
    std::ostringstream os;
    auto all = expect_rows;
    all.insert(all.end(), var_rows.begin(), var_rows.end());
    write_mse_profile_csv(os, all);
    write_text(g.out, os.str());
  }
  std::cout << (failures ? std::to_string(failures) + " check(s) failed" : std::string("all checks passed")) << "\n";
  return failures ? kCheckFailed : kOk;
}

int cmd_energy_report(const Globals& g, const std::string& profile, const EnergyConstants& constants) {
  std::ifstream in(profile, std::ios::binary);
  if (!in) throw FormatError("cannot open profile " + profile);
  const auto profiles = read_profile_csv(in);
  const auto report = energy_report(profiles, constants);
  const auto text = energy_report_json(report);
  if (g.out.empty())
    std::cout << text;
  else
    write_text(g.out, text);
  for (const auto& l : report.layers)
    std::cerr << l.layer << ": snn " << l.snn_pj << " pJ, ann " << l.ann_pj << " pJ, ratio " << l.ratio << "\n";
  return kOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const IntegrityError*>(&e) || dynamic_cast<const MissingClassError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e))
    return kConfig;
  if (dynamic_cast<const DivergenceError*>(&e)) return kDiverged;
  if (dynamic_cast<const CheckpointMismatchError*>(&e)) return kMismatch;
  if (dynamic_cast<const ProtocolError*>(&e)) return kProtocol;
  return kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spiking few-shot class-incremental learning toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "Experiment configuration (INI)");
  app.add_option("--seed", g.seed, "Master seed (overrides run.seed)");
  app.add_option("--out", g.out, "Primary output path");
  app.add_flag("--canonical-output", g.canonical, "Omit wall-clock timings from results documents");
  app.add_option("--dump-predictions", g.dump_predictions, "Write per-sample predictions CSV");
  app.add_option("--set", g.overrides, "Override a config key: section.key=value");
  app.add_option("--alpha", g.alpha, "Prototype fusion weight");
  app.add_option("--passes", g.passes, "Threshold adaptation passes per session");
  app.add_option("--theta-init", g.theta_init, "Initial firing threshold");
  app.add_option("--threshold-update-sign", g.update_sign, "+1 or -1");
  app.add_flag("--no-threshold-floor", g.no_floor, "Do not clamp thresholds after updates");
  app.add_flag("--zo-mask-gradients", g.zo_mask, "Gate spike derivatives by the channel mask");
  app.add_flag("--prefix-mask", g.prefix_mask, "Select the first channels as adaptive");
  app.add_flag("--index-order", g.index_order, "Assign classes to sessions in index order");

  std::string results_path;
  auto* train = app.add_subcommand("train-base", "Train the base session and write a checkpoint");
  train->add_option("--results", results_path, "Results document path (default: <out>.results.json)");

  std::string checkpoint, save_final;
  auto* inc = app.add_subcommand("run-incremental", "Run every incremental session from a base checkpoint");
  inc->add_option("--checkpoint", checkpoint, "Base checkpoint")->required();
  inc->add_option("--save-checkpoint", save_final, "Write the final-session checkpoint");

  auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on its seen classes");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint")->required();

  GradCheckOptions gc;
  auto* grad = app.add_subcommand("grad-check", "Zeroth-order estimator expectation and variance suite");
  grad->add_flag("--self-test", gc.self_test, "Inject a wrong closed form; the suite must fail");
  grad->add_option("--draws", gc.expectation_draws, "Draws per expectation grid point")->check(CLI::Range(100, 100000000));
  grad->add_option("--trials", gc.variance_trials, "Trials per variance grid point")->check(CLI::Range(100, 100000000));

  std::string profile;
  EnergyConstants constants;
  auto* energy = app.add_subcommand("energy-report", "Energy report from a layer profile CSV");
  energy->add_option("--profile,profile", profile, "Profile CSV (layer,kind,flops,zeta,timesteps)")->required();
  energy->add_option("--e-mac", constants.e_mac, "Energy per MAC in pJ");
  energy->add_option("--e-ac", constants.e_ac, "Energy per AC in pJ");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*train) return cmd_train_base(g, results_path);
    if (*inc) return cmd_run_incremental(g, checkpoint, save_final);
    if (*eval) return cmd_evaluate(g, checkpoint);
    if (*grad) return cmd_grad_check(g, gc);
    if (*energy) return cmd_energy_report(g, profile, constants);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kFailure;
}
