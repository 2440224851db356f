#include "hpdp/cli.hpp"

#include "hpdp/checkpoint.hpp"
#include "hpdp/io.hpp"
#include "hpdp/priors.hpp"
#include "hpdp/random.hpp"
#include "hpdp/synthdata.hpp"
#include "hpdp/trainer.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace hpdp {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

json report_to_json(const MetricReport& r) {
  return json{{"task", r.task},
              {"n", r.n},
              {"acc", opt_json(r.acc)},
              {"f1_macro", opt_json(r.f1_macro)},
              {"auc", opt_json(r.auc)},
              {"c_index", opt_json(r.c_index)},
              {"logrank_p", opt_json(r.logrank_p)}};
}

MetricReport report_from_json(const json& j) {
  MetricReport r;
  try {
    r.task = j.at("task").get<std::string>();
    r.n = j.at("n").get<std::size_t>();
    r.acc = opt_from(j, "acc");
    r.f1_macro = opt_from(j, "f1_macro");
    r.auc = opt_from(j, "auc");
    r.c_index = opt_from(j, "c_index");
    r.logrank_p = opt_from(j, "logrank_p");
  } catch (const json::exception& e) {
    throw InputError(std::string("metric report: ") + e.what());
  }
  return r;
}

namespace cli {
namespace {

// Input or usage problems that map to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class RunManifest {
 public:
  RunManifest(std::string command, fs::path out, std::uint64_t seed, std::string config)
      : command_(std::move(command)), out_(std::move(out)), seed_(seed), config_(std::move(config)),
        start_(utc_now()) {}

  void add(const fs::path& p) { outputs_.push_back(fs::relative(p, out_).generic_string()); }

  void write() const {
    for (const auto& o : outputs_)
      if (!fs::exists(out_ / o)) throw std::runtime_error("run manifest lists missing output " + o);
    json j = {{"command", command_},   {"config", config_},      {"seed", seed_},
              {"out", out_.string()},  {"version", kToolVersion}, {"start", start_},
              {"end", utc_now()},      {"outputs", outputs_}};
    io::write_file_atomic(out_ / "run.json", j.dump(2) + "\n");
  }

 private:
  std::string command_;
  fs::path out_;
  std::uint64_t seed_;
  std::string config_;
  std::string start_;
  std::vector<std::string> outputs_;
};

// Section `name` when present, otherwise the whole document.
json config_section(const std::string& path, const char* name) {
  if (path.empty()) return json::object();
  if (!fs::exists(path)) throw UsageError("config file not found: " + path);
  json j = load_config_file(path);
  if (j.contains(name) && j.at(name).is_object()) return j.at(name);
  return j;
}

LoadedCohort load_cohort_dir(const std::string& dir) {
  if (dir.empty()) throw UsageError("--cohort is required");
  if (!fs::exists(fs::path(dir) / "cohort.json")) throw UsageError("no cohort at " + dir);
  return read_cohort(dir);
}

const std::vector<Bag>& pick_split(const CohortSplit& s, const std::vector<Bag>& all, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  if (name == "all") return all;
  throw UsageError("--split must be train, val, test or all");
}

bool parse_switch(const std::string& v, const char* flag) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw UsageError(std::string(flag) + " expects on or off, got " + v);
}

void write_km_csv(const fs::path& path, std::span<const SurvivalRecord> recs) {
  std::string s = "time,survival\n";
  for (const auto& p : km_curve(recs)) s += fmt(p.time) + "," + fmt(p.survival) + "\n";
  io::write_file_atomic(path, s);
}

void write_attention_csv(const fs::path& path, const Bag& bag, const AttentionMap<double>& att) {
  std::string s = "instance,x,y";
  for (Eigen::Index k = 0; k < att.a_prior.cols(); ++k) s += ",prior_" + std::to_string(k);
  for (Eigen::Index k = 0; k < att.a_adapt.cols(); ++k) s += ",adapt_" + std::to_string(k);
  s += "\n";
  for (Eigen::Index i = 0; i < att.a_total.rows(); ++i) {
    s += std::to_string(i) + "," + fmt(bag.coords[static_cast<std::size_t>(i)].x) + "," +
         fmt(bag.coords[static_cast<std::size_t>(i)].y);
    for (Eigen::Index k = 0; k < att.a_total.cols(); ++k) s += "," + fmt(att.a_total(i, k));
    s += "\n";
  }
  io::write_file_atomic(path, s);
}

std::string history_csv(const std::vector<EpochRecord>& h) {
  std::string s = "epoch,train_loss,task_loss,proto_loss,val_metric,lr\n";
  for (const auto& r : h)
    s += std::to_string(r.epoch) + "," + fmt(r.train_loss) + "," + fmt(r.task_loss) + "," + fmt(r.proto_loss) +
         "," + fmt(r.val_metric) + "," + fmt(r.lr) + "\n";
  return s;
}

struct GenArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  bool scatter = false;
};

int cmd_gen_data(const GenArgs& a, std::ostream& out) {
  GeneratorConfig cfg = config_section(a.config, "data").get<GeneratorConfig>();
  if (a.seed) cfg.seed = *a.seed;
  if (a.scatter) cfg.scatter = true;
  cfg.validate();
  RunManifest run("gen-data", a.out, cfg.seed, a.config);
  const auto cohort = generate_cohort(cfg);
  write_cohort(a.out, cohort, cfg);
  run.add(fs::path(a.out) / "cohort.json");
  run.write();
  out << "wrote " << cohort.size() << " bags to " << a.out << "\n";
  return kExitOk;
}

struct ClusterArgs {
  std::string cohort, out;
  int k = 4;
  std::uint64_t seed = 0;
};

int cmd_cluster(const ClusterArgs& a, std::ostream& out) {
  const auto cohort = load_cohort_dir(a.cohort);
  const MatrixXd pooled = pooled_instances(cohort.bags);
  if (a.k < 1 || a.k > pooled.rows())
    throw UsageError("--k must lie in [1, " + std::to_string(pooled.rows()) + "] (total instances)");
  RunManifest run("cluster", a.out, a.seed, "");
  const PrototypeBank bank = kmeans(pooled, a.k, a.seed);
  save_prototypes(a.out, bank);
  run.add(fs::path(a.out) / "checkpoint.json");
  run.add(fs::path(a.out) / "arrays.bin");
  run.write();
  out << "inertia " << fmt(bank.inertia) << " after " << bank.iterations << " iterations\n";
  return kExitOk;
}

struct TrainArgs {
  std::string cohort, config, out, prototypes, task;
  std::optional<std::uint64_t> seed;
  std::optional<int> cox_batch, epochs;
  std::string spe, maps, hcma, text;
  int threads = 1;
};

TrainConfig build_train_config(const TrainArgs& a) {
  TrainConfig cfg = config_section(a.config, "train").get<TrainConfig>();
  if (a.seed) cfg.seed = *a.seed;
  if (!a.task.empty()) cfg.task = task_from_string(a.task);
  if (a.cox_batch) cfg.cox_batch = *a.cox_batch;
  if (a.epochs) {
    cfg.max_epochs = *a.epochs;
    cfg.patience = std::min(cfg.patience, cfg.max_epochs);
  }
  if (!a.spe.empty()) cfg.toggles.spe = parse_switch(a.spe, "--toggle-spe");
  if (!a.maps.empty()) cfg.toggles.maps = parse_switch(a.maps, "--toggle-maps");
  if (!a.hcma.empty()) cfg.toggles.hcma = parse_switch(a.hcma, "--toggle-hcma");
  if (!a.text.empty()) cfg.toggles.text = parse_switch(a.text, "--toggle-text");
  cfg.threads = a.threads;
  cfg.validate();
  return cfg;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const TrainConfig cfg = build_train_config(a);
  const auto cohort = load_cohort_dir(a.cohort);
  if (cohort.config.dim != cfg.dim)
    throw UsageError("cohort feature width " + std::to_string(cohort.config.dim) + " differs from config dim " +
                     std::to_string(cfg.dim));
  const CohortSplit split = split_for(cohort.bags, cfg);

  MatrixXd teachers;
  if (cfg.toggles.maps) {
    if (!a.prototypes.empty()) {
      teachers = load_prototypes(a.prototypes).teachers;
      if (teachers.rows() != cfg.k_sup || teachers.cols() != cfg.dim)
        throw UsageError("prototype bank is " + shape_str(teachers.rows(), teachers.cols()) + ", expected " +
                         shape_str(cfg.k_sup, cfg.dim));
    } else {
      teachers = fit_teachers(split.train, cfg);
    }
  }

  RunManifest run("train", a.out, cfg.seed, a.config);
  const TrainResult res = train(split.train, split.val, cfg, teachers);
  const fs::path dir(a.out);
  save_checkpoint(dir / "checkpoint", res.best);
  io::write_file_atomic(dir / "history.csv", history_csv(res.history));
  run.add(dir / "checkpoint" / "checkpoint.json");
  run.add(dir / "checkpoint" / "arrays.bin");
  run.add(dir / "history.csv");
  run.write();
  if (res.diverged) err << "warning: " << res.message << "\n";
  out << "best epoch " << res.best_epoch << ", validation " << fmt(res.best.best_val) << " after "
      << res.history.size() << " epochs\n";
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint, cohort, split = "test", out, dump_attention;
  int threads = 1;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (!fs::exists(fs::path(a.checkpoint) / "checkpoint.json"))
    throw UsageError("no checkpoint at " + a.checkpoint);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const auto cohort = load_cohort_dir(a.cohort);
  const CohortSplit split = split_for(cohort.bags, ckpt.config);
  const std::vector<Bag>& bags = pick_split(split, cohort.bags, a.split);
  const bool dump = !a.dump_attention.empty();
  const Evaluation ev = evaluate(ckpt, bags, a.threads, dump);

  const fs::path dir(a.out);
  RunManifest run("eval", dir, ckpt.config.seed, a.checkpoint);
  fs::create_directories(dir);
  io::write_file_atomic(dir / "metrics.json", report_to_json(ev.report).dump(2) + "\n");
  run.add(dir / "metrics.json");

  if (ckpt.config.task == Task::Survival) {
    std::vector<double> risks(bags.size());
    std::vector<SurvivalRecord> recs(bags.size());
    for (std::size_t i = 0; i < bags.size(); ++i) {
      risks[i] = ev.outputs(static_cast<Eigen::Index>(i), 0);
      recs[i] = bags[i].survival;
    }
    const auto [low, high] = split_by_median_risk(risks, recs);
    write_km_csv(dir / "km_low.csv", low);
    write_km_csv(dir / "km_high.csv", high);
    run.add(dir / "km_low.csv");
    run.add(dir / "km_high.csv");
  }
  if (dump) {
    if (!ckpt.config.toggles.maps) throw UsageError("--dump-attention needs a model trained with maps on");
    const fs::path adir(a.dump_attention);
    fs::create_directories(adir);
    for (std::size_t i = 0; i < bags.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "bag_%05zu.csv", i);
      write_attention_csv(adir / name, bags[i], ev.attention[i]);
    }
  }
  run.write();
  out << report_to_json(ev.report).dump() << "\n";
  return kExitOk;
}

struct GradArgs {
  std::string config, task;
  double threshold = 1e-5;
  std::uint64_t seed = 0;
  int seeds = 1;
  std::size_t samples = 200;
};

int cmd_gradcheck(const GradArgs& a, std::ostream& out) {
  TrainConfig cfg = config_section(a.config, "train").get<TrainConfig>();
  if (!a.task.empty()) cfg.task = task_from_string(a.task);
  cfg.validate();
  GradCheckOptions opt;
  opt.samples = a.samples;
  double worst = 0.0;
  for (int s = 0; s < a.seeds; ++s) {
    const auto r = full_model_grad_check(cfg, a.seed + static_cast<std::uint64_t>(s), 3, opt);
    out << "seed " << a.seed + static_cast<std::uint64_t>(s) << ": max relative error " << fmt(r.max_rel_err)
        << " over " << r.checked << " coordinates (worst in " << r.worst_array << ")\n";
    worst = std::max(worst, r.max_rel_err);
  }
  const bool ok = worst < a.threshold;
  out << (ok ? "PASS" : "FAIL") << " max relative error " << fmt(worst) << " threshold " << fmt(a.threshold) << "\n";
  return ok ? kExitOk : kExitVerification;
}

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  static const char* kMetrics[] = {"acc", "f1_macro", "auc", "c_index", "logrank_p"};
  std::map<std::string, std::vector<double>> values;
  for (const auto& path : a.inputs) {
    if (!fs::exists(path)) throw UsageError("no such file: " + path);
    const json j = json::parse(io::read_file(path), nullptr, false);
    if (j.is_discarded()) throw UsageError(path + ": malformed JSON");
    const MetricReport r = report_from_json(j);
    const std::optional<double> vals[] = {r.acc, r.f1_macro, r.auc, r.c_index, r.logrank_p};
    for (std::size_t m = 0; m < 5; ++m)
      if (vals[m]) values[kMetrics[m]].push_back(*vals[m]);
  }
  // Sample standard deviation (n - 1); empty when fewer than two runs.
  std::string csv = "metric,n,mean,std\n";
  for (const char* name : kMetrics) {
    const auto it = values.find(name);
    if (it == values.end()) continue;
    const auto& v = it->second;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= double(v.size());
    std::string sd;
    if (v.size() > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      sd = fmt(std::sqrt(ss / double(v.size() - 1)));
    }
    csv += std::string(name) + "," + std::to_string(v.size()) + "," + fmt(mean) + "," + sd + "\n";
  }
  const fs::path path(a.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_file_atomic(path, csv);
  out << csv;
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prototype-anchored multiple-instance learning on synthetic pathology bags", "hpdp"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate a synthetic cohort");
  c_gen->add_option("--config", gen.config, "Generator config (key = value or JSON)");
  c_gen->add_option("--seed", gen.seed, "Seed (overrides the config)");
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_flag("--scatter", gen.scatter, "Random instance positions instead of blobs");

  ClusterArgs clu;
  auto* c_clu = app.add_subcommand("cluster", "K-means teacher prototypes over the pooled instances");
  c_clu->add_option("--cohort", clu.cohort, "Cohort directory")->required();
  c_clu->add_option("--k", clu.k, "Number of prototypes");
  c_clu->add_option("--seed", clu.seed, "Seed");
  c_clu->add_option("--out", clu.out, "Output directory")->required();

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train a model on the train/val split of a cohort");
  c_tr->add_option("--cohort", tr.cohort, "Cohort directory")->required();
  c_tr->add_option("--config", tr.config, "Training config (key = value or JSON)");
  c_tr->add_option("--seed", tr.seed, "Seed (overrides the config)");
  c_tr->add_option("--out", tr.out, "Output directory")->required();
  c_tr->add_option("--prototypes", tr.prototypes, "Teacher bank written by cluster");
  c_tr->add_option("--task", tr.task, "classification or survival");
  c_tr->add_option("--epochs", tr.epochs, "Maximum epochs (overrides the config)");
  c_tr->add_option("--cox-batch", tr.cox_batch, "Subjects per Cox batch, 0 = whole cohort");
  c_tr->add_option("--toggle-spe", tr.spe, "on|off");
  c_tr->add_option("--toggle-maps", tr.maps, "on|off");
  c_tr->add_option("--toggle-hcma", tr.hcma, "on|off");
  c_tr->add_option("--toggle-text", tr.text, "on|off");
  c_tr->add_option("--threads", tr.threads, "Worker threads")->check(CLI::PositiveNumber);

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  c_ev->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory")->required();
  c_ev->add_option("--cohort", ev.cohort, "Cohort directory")->required();
  c_ev->add_option("--split", ev.split, "train, val, test or all");
  c_ev->add_option("--out", ev.out, "Output directory")->required();
  c_ev->add_option("--dump-attention", ev.dump_attention, "Directory for per-bag attention CSVs");
  c_ev->add_option("--threads", ev.threads, "Worker threads")->check(CLI::PositiveNumber);

  GradArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference check of the full model gradient");
  c_gc->add_option("--config", gc.config, "Training config");
  c_gc->add_option("--task", gc.task, "classification or survival");
  c_gc->add_option("--threshold", gc.threshold, "Maximum allowed relative error");
  c_gc->add_option("--seed", gc.seed, "First seed");
  c_gc->add_option("--seeds", gc.seeds, "Number of seeds")->check(CLI::PositiveNumber);
  c_gc->add_option("--samples", gc.samples, "Coordinates per seed");

  ReportArgs rep;
  auto* c_rep = app.add_subcommand("report", "Aggregate eval metrics.json files into a CSV");
  c_rep->add_option("inputs", rep.inputs, "metrics.json files")->required();
  c_rep->add_option("--out", rep.out, "Output CSV")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitUsage;
  }

  try {
    if (c_gen->parsed()) return cmd_gen_data(gen, out);
    if (c_clu->parsed()) return cmd_cluster(clu, out);
    if (c_tr->parsed()) return cmd_train(tr, out, err);
    if (c_ev->parsed()) return cmd_eval(ev, out);
    if (c_gc->parsed()) return cmd_gradcheck(gc, out);
    if (c_rep->parsed()) return cmd_report(rep, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {  // ConfigError, ShapeError
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace cli
}  // namespace hpdp
