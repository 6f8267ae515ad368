#pragma once

// Operator entry point: synth, ingest, train, eval, compare, correlate, serve.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "charm/analysis.hpp"
#include "charm/collect_http.hpp"
#include "charm/core_data.hpp"
#include "charm/error.hpp"
#include "charm/oracle.hpp"
#include "charm/synth.hpp"

namespace charm::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kIo = 3,
  kInvalidInput = 4,
  kTrainingFailure = 5,
};

inline int exit_code(Errc c) {
  switch (c) {
    case Errc::io: return kIo;
    case Errc::training:
    case Errc::degenerate: return kTrainingFailure;
    case Errc::validation:
    case Errc::parse:
    case Errc::integrity:
    case Errc::duplicate_key:
    case Errc::domain:
    case Errc::protocol:
    case Errc::not_found:
    case Errc::conflict: return kInvalidInput;
  }
  return kFailure;
}

struct CliConfig {
  std::string subcommand;
  std::string profiles;
  std::string events;
  std::string out;
  int k = 10;
  std::uint64_t seed = 0;
  std::string mode = "charm";
  std::string scale = "five_point";
  std::optional<std::string> baseline;
  int jobs = 1;
  int epochs = 200;
  synth::CohortSpec cohort;
  std::vector<std::string> reports;  // compare
  int port = 8080;
  std::string catalog;
  std::string log_dir;
  bool dry_run = false;              // serve: build everything, do not listen
};

namespace detail {

inline std::filesystem::path data_root() {
  const char* env = std::getenv("CHARM_DATA_DIR");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path(".");
}

inline std::string or_default(const std::string& v, const std::string& file) {
  return v.empty() ? (data_root() / file).string() : v;
}

inline Dataset load(const CliConfig& c) {
  return load_dataset(or_default(c.profiles, std::string(kProfilesFile)),
                      or_default(c.events, std::string(kEventsFile)));
}

inline OracleMode mode_of(const std::string& variant, const std::string& scale) {
  OracleMode m;
  m.variant = parse_variant(variant);
  m.value_scale = parse_scale(scale);
  return m;
}

inline nn::MlpConfig mlp_config(const CliConfig& c) {
  nn::MlpConfig cfg;
  cfg.seed = c.seed;
  cfg.epochs = c.epochs;
  return cfg;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw Error(Errc::io, "cannot create directory " + path.parent_path().string());
  }
  charm::detail::write_atomically(path, text);
}

inline nlohmann::ordered_json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path);
  try {
    return nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, path + ": " + e.what());
  }
}

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline std::string opt_fmt(const std::optional<double>& v) { return v ? fmt("%.4f", *v) : "n/a"; }

// --- subcommands ------------------------------------------------------------

inline int do_synth(const CliConfig& c, std::ostream& out) {
  auto spec = c.cohort;
  spec.seed = c.seed;
  spec.validate();
  const auto ds = synth::generate_cohort(spec);
  const auto dir = c.out.empty() ? data_root() : std::filesystem::path(c.out);
  save_dataset(ds, dir);
  std::size_t missing = 0;
  for (const auto& e : ds.events()) missing += e.rated() ? 0 : 1;
  out << "participants  " << ds.profiles().size() << "\n"
      << "events        " << ds.events().size() << "\n"
      << "missing       " << missing << "\n"
      << "theta         " << spec.theta << "\n"
      << "noise_sd      " << spec.noise_sd << "\n"
      << "written to    " << dir.string() << "\n";
  return kOk;
}

inline int do_ingest(const CliConfig& c, std::ostream& out) {
  const auto ds = load(c);
  std::size_t rated = 0;
  for (const auto& e : ds.events()) rated += e.rated() ? 1 : 0;
  out << "participants  " << ds.profiles().size() << "\n"
      << "events        " << ds.events().size() << "\n"
      << "rated         " << rated << "\n"
      << "missing       " << ds.events().size() - rated << "\n";
  for (Task t : kTasks) {
    if (const auto rr = ds.reward_range(t)) {
      out << "reward " << to_string(t) << "  [" << rr->min << ", " << rr->max << "]\n";
    }
  }
  if (!c.out.empty()) {
    save_dataset(ds, c.out);
    out << "written to    " << c.out << "\n";
  }
  return kOk;
}

inline int do_train(const CliConfig& c, std::ostream& out) {
  const auto mode = mode_of(c.mode, c.scale);
  const auto ds = load(c);
  const auto model = train_oracle(ds, mode, mlp_config(c));
  const auto path = c.out.empty() ? data_root() / ("model_" + c.mode + "_" + c.scale + ".json")
                                  : std::filesystem::path(c.out);
  write_text(path, to_json(model).dump(1) + "\n");
  out << "mode          " << c.mode << "\n"
      << "scale         " << c.scale << "\n";
  if (model.mlp) {
    out << "epochs        " << model.mlp->loss_history.size() - 1 << "\n"
        << "final loss    " << fmt("%.6f", model.mlp->loss_history.back()) << "\n";
  }
  out << "delay lambda  " << fmt("%.3f", model.delay_transform.lambda) << "\n"
      << "written to    " << path.string() << "\n";
  return kOk;
}

inline void print_eval(const EvalMetrics& m, const std::optional<PairedTTest>& t, const std::string& baseline,
                       std::ostream& out) {
  out << "fold  n_train  n_test  accuracy  delay_mse\n";
  for (const auto& f : m.per_fold) {
    char line[96];
    std::snprintf(line, sizeof line, "%4d  %7zu  %6zu  %8.4f  %9.4f\n", f.fold, f.n_train, f.n_test, f.accuracy,
                  f.delay_seconds.mse);
    out << line;
  }
  out << "mean accuracy     " << fmt("%.4f", m.mean_accuracy) << "\n"
      << "delay mse (s^2)   " << fmt("%.4f", m.delay_mse) << "  r2 " << opt_fmt(m.delay_r2) << "\n"
      << "delay mse (bc)    " << fmt("%.4f", m.delay_mse_boxcox) << "  r2 " << opt_fmt(m.delay_r2_boxcox) << "\n";
  if (t) {
    out << "vs " << baseline << ": diff " << fmt("%+.4f", t->mean_diff) << "  t " << fmt("%.3f", t->t) << "  p "
        << fmt("%.3g", t->p) << "\n";
  }
}

inline int do_eval(const CliConfig& c, std::ostream& out) {
  const auto mode = mode_of(c.mode, c.scale);
  std::optional<OracleMode> base;
  if (c.baseline) {
    base = mode_of(*c.baseline, c.scale);
    if (base->variant == mode.variant) throw Error(Errc::validation, "--baseline must differ from --mode");
  }
  const auto ds = load(c);
  const auto rows = build_rows(ds, mode.value_scale);
  const CvOptions opt{c.k, c.seed, c.jobs};
  const auto metrics = cross_validate_rows(rows, mode, mlp_config(c), opt);
  std::optional<PairedTTest> t;
  if (base) t = compare_models(metrics, cross_validate_rows(rows, *base, mlp_config(c), opt));
  const auto path = c.out.empty() ? data_root() / ("eval_" + c.mode + "_" + c.scale + ".json")
                                  : std::filesystem::path(c.out);
  write_text(path, to_json(metrics, t, c.baseline.value_or("")).dump(1) + "\n");
  print_eval(metrics, t, c.baseline.value_or(""), out);
  out << "written to        " << path.string() << "\n";
  return kOk;
}

inline int do_compare(const CliConfig& c, std::ostream& out) {
  if (c.reports.size() != 2) throw Error(Errc::validation, "compare needs exactly two report files");
  const auto a = metrics_from_json(read_json(c.reports[0]));
  const auto b = metrics_from_json(read_json(c.reports[1]));
  const auto t = compare_models(a, b);
  nlohmann::ordered_json j;
  j["a"] = c.reports[0];
  j["b"] = c.reports[1];
  j["k"] = t.k;
  j["mean_diff"] = t.mean_diff;
  j["sd_diff"] = t.sd_diff;
  j["t"] = std::isfinite(t.t) ? nlohmann::ordered_json(t.t) : nlohmann::ordered_json(t.t > 0 ? "inf" : "-inf");
  j["p"] = t.p;
  j["degenerate"] = t.degenerate;
  const auto path = c.out.empty() ? data_root() / "compare.json" : std::filesystem::path(c.out);
  write_text(path, j.dump(1) + "\n");
  out << "a             " << c.reports[0] << "  accuracy " << fmt("%.4f", a.mean_accuracy) << "\n"
      << "b             " << c.reports[1] << "  accuracy " << fmt("%.4f", b.mean_accuracy) << "\n"
      << "mean diff     " << fmt("%+.4f", t.mean_diff) << "\n"
      << "t             " << fmt("%.4f", t.t) << "\n"
      << "p             " << fmt("%.4g", t.p) << "\n"
      << "written to    " << path.string() << "\n";
  return kOk;
}

inline int do_correlate(const CliConfig& c, std::ostream& out) {
  const auto ds = load(c);
  const auto report = analysis::build_report(ds);
  const auto dir = c.out.empty() ? data_root() : std::filesystem::path(c.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::io, "cannot create directory " + dir.string());
  analysis::emit_figure_data(report, dir / "correlations.csv");
  analysis::emit_distribution_data(analysis::distributions(ds), dir / "distributions.csv");

  out << "domain           delay_r   accuracy_r  absdiff_r\n";
  for (const auto& row : report.rows) {
    char line[96];
    auto cell = [&](analysis::Outcome o) { return row[o].r ? fmt("%+.3f", *row[o].r) : std::string("  n/a"); };
    std::snprintf(line, sizeof line, "%-15s  %-8s  %-10s  %-9s\n", std::string(to_string(row.domain)).c_str(),
                  cell(analysis::Outcome::delay).c_str(), cell(analysis::Outcome::accuracy).c_str(),
                  cell(analysis::Outcome::absdiff).c_str());
    out << line;
  }
  if (report.reward_value) {
    out << "r(reward, value)  " << fmt("%+.3f", report.reward_value->r) << "  (reference "
        << fmt("%.3f", report.reference_line) << ")\n";
  }
  if (report.reward_delay) out << "r(reward, delay)  " << fmt("%+.3f", report.reward_delay->r) << "\n";
  out << "participant accuracy  mean " << fmt("%.4f", report.mean_accuracy) << "  sd "
      << fmt("%.4f", report.sd_accuracy) << "  max " << fmt("%.4f", report.max_accuracy) << "\n"
      << "written to        " << (dir / "correlations.csv").string() << ", "
      << (dir / "distributions.csv").string() << "\n";
  return kOk;
}

inline int do_serve(const CliConfig& c, std::ostream& out) {
  auto catalog = c.catalog.empty() ? collect::synthetic_catalog(c.seed) : collect::load_catalog(c.catalog);
  collect::ServiceOptions opts;
  opts.seed = c.seed;
  opts.log_dir = c.log_dir.empty() ? data_root() / "sessions" : std::filesystem::path(c.log_dir);
  collect::CollectService service(std::move(catalog), opts);
  service.restore();
  httplib::Server server;
  collect::register_routes(server, service);
  out << "catalog       " << service.catalog().size() << " trajectories\n"
      << "event logs    " << opts.log_dir->string() << "\n";
  if (c.dry_run) return kOk;
  out << "listening on  0.0.0.0:" << c.port << std::endl;
  if (!server.listen("0.0.0.0", c.port)) throw Error(Errc::io, "cannot listen on port " + std::to_string(c.port));
  return kOk;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CliConfig c;
  CLI::App app{"CHARM workbench: human-characteristics feedback oracles", "charm"};
  app.require_subcommand(1);
  const std::vector<std::string> variants{"charm", "stats_only", "random"};
  const std::vector<std::string> scales{"five_point", "binary"};

  auto data_flags = [&](CLI::App* s) {
    s->add_option("--profiles", c.profiles, "profiles JSONL (default $CHARM_DATA_DIR/profiles.jsonl)");
    s->add_option("--events", c.events, "events JSONL (default $CHARM_DATA_DIR/events.jsonl)");
  };
  auto model_flags = [&](CLI::App* s) {
    s->add_option("--mode", c.mode, "oracle variant")->check(CLI::IsMember(variants));
    s->add_option("--scale", c.scale, "feedback value scale")->check(CLI::IsMember(scales));
    s->add_option("--seed", c.seed, "random seed");
    s->add_option("--epochs", c.epochs, "training epochs")->check(CLI::NonNegativeNumber);
  };

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic cohort");
  synth_cmd->add_option("--out", c.out, "output directory (default $CHARM_DATA_DIR)");
  synth_cmd->add_option("--seed", c.seed, "random seed");
  synth_cmd->add_option("--theta", c.cohort.theta, "informativeness of human characteristics")
      ->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--noise", c.cohort.noise_sd, "rating noise sd")->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--participants", c.cohort.n_participants, "number of participants")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--windows", c.cohort.windows_per_participant, "rated windows per participant")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--timeout-rate", c.cohort.timeout_rate, "share of MISSING ratings")
      ->check(CLI::Range(0.0, 0.99));

  auto* ingest_cmd = app.add_subcommand("ingest", "validate dataset files and write the canonical form");
  data_flags(ingest_cmd);
  ingest_cmd->add_option("--out", c.out, "write canonical files to this directory");

  auto* train_cmd = app.add_subcommand("train", "train one oracle and save it");
  data_flags(train_cmd);
  model_flags(train_cmd);
  train_cmd->add_option("--out", c.out, "model JSON path");

  auto* eval_cmd = app.add_subcommand("eval", "k-fold cross-validation report");
  data_flags(eval_cmd);
  model_flags(eval_cmd);
  eval_cmd->add_option("--k", c.k, "number of folds")->check(CLI::Range(2, 1000));
  eval_cmd->add_option("--jobs", c.jobs, "parallel folds")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--baseline", c.baseline, "also evaluate this variant and run a paired t-test")
      ->check(CLI::IsMember(variants));
  eval_cmd->add_option("--out", c.out, "report JSON path");

  auto* compare_cmd = app.add_subcommand("compare", "paired t-test between two eval reports");
  compare_cmd->add_option("reports", c.reports, "two report files")->required()->expected(2);
  compare_cmd->add_option("--out", c.out, "result JSON path");

  auto* correlate_cmd = app.add_subcommand("correlate", "characteristic/outcome correlations");
  data_flags(correlate_cmd);
  correlate_cmd->add_option("--out", c.out, "output directory for CSV files");

  auto* serve_cmd = app.add_subcommand("serve", "run the feedback-collection service");
  serve_cmd->add_option("--port", c.port, "TCP port")->check(CLI::Range(1, 65535));
  serve_cmd->add_option("--seed", c.seed, "session sampling seed");
  serve_cmd->add_option("--catalog", c.catalog, "trajectory manifest JSONL (default: synthetic catalog)");
  serve_cmd->add_option("--log-dir", c.log_dir, "session event logs (default $CHARM_DATA_DIR/sessions)");
  serve_cmd->add_flag("--dry-run", c.dry_run, "set up the service and exit");

  std::vector<std::string> argv_store{"charm"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "charm: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (synth_cmd->parsed()) return detail::do_synth(c, out);
    if (ingest_cmd->parsed()) return detail::do_ingest(c, out);
    if (train_cmd->parsed()) return detail::do_train(c, out);
    if (eval_cmd->parsed()) return detail::do_eval(c, out);
    if (compare_cmd->parsed()) return detail::do_compare(c, out);
    if (correlate_cmd->parsed()) return detail::do_correlate(c, out);
    if (serve_cmd->parsed()) return detail::do_serve(c, out);
  } catch (const Error& e) {
    err << "charm: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "charm: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace charm::cli
