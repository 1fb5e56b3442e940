#pragma once

// Command-line front end. Each command is a function over streams so it can
// be driven in-process; run() is the argv entry point.
//
// Exit codes: 0 ok, 1 validation or analysis finding, 2 usage or I/O error.

#include <adaptest/attempt_store.hpp>
#include <adaptest/comparison.hpp>
#include <adaptest/item_bank.hpp>
#include <adaptest/service.hpp>
#include <adaptest/simulator.hpp>

#include <CLI11.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace adaptest::cli {

enum Exit : int { ok = 0, finding = 1, usage = 2 };

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// bank validate

inline int cmd_bank_validate(const fs::path& path, int required_levels, std::ostream& out, std::ostream& err) {
  std::ifstream in(path);
  if (!in) {
    err << "error: cannot read '" << path.string() << "'\n";
    return usage;
  }
  ItemBank bank;
  try {
    bank = parse_bank(in);
  } catch (const ParseError& e) {
    out << path.string() << ": " << e.what() << "\n";
    return finding;
  }
  int levels = required_levels > 0 ? required_levels : bank.num_levels;
  auto issues = validate_bank(bank, levels);
  for (const auto& i : issues) {
    out << path.string() << ": ";
    if (!i.item_id.empty()) out << "item '" << i.item_id << "': ";
    out << i.message << "\n";
  }
  if (!issues.empty()) return finding;
  out << path.string() << ": ok, bank '" << bank.bank_id << "', " << bank.num_levels << " levels, "
      << bank.items.size() << " items\n";
  return ok;
}

// ---------------------------------------------------------------------------
// simulate

/// Per-item rows of <dir>/<stem>.csv live in <dir>/items/<stem>.csv.
inline fs::path detail_path_for(const fs::path& summary) {
  return summary.parent_path() / "items" / summary.filename();
}

/// Writes the summary and detail CSVs of one dataset.
inline void write_dataset_files(const CohortDataset& ds, const fs::path& dir, const std::string& stem) {
  fs::create_directories(dir / "items");
  std::ofstream s(dir / (stem + ".csv"), std::ios::binary), d(detail_path_for(dir / (stem + ".csv")), std::ios::binary);
  if (!s || !d) throw Error("cannot write into '" + dir.string() + "'");
  export_csv(ds.attempts, s, d);
}

inline void write_activity_line(std::ostream& out, const std::string& name, const CohortDataset& ds) {
  auto m = activity_metrics(ds.attempts);
  auto sc = score_summary(ds.attempts);
  out << name << ": attempts=" << m.attempts << " students=" << m.students
      << " attempts/student=" << detail::fixed(m.attempts_per_student, 2)
      << " active-days/student=" << detail::fixed(m.mean_active_days, 2) << " finished=" << sc.n
      << " score=" << detail::fixed(sc.mean, 2) << "±" << detail::fixed(sc.sd, 2) << "\n";
}

inline int cmd_simulate(const fs::path& scenario_path, const fs::path& out_dir, std::optional<std::uint64_t> seed,
                        std::ostream& out, std::ostream& err) {
  ScenarioConfig sc;
  try {
    sc = load_scenario(scenario_path);
  } catch (const ParseError& e) {
    err << "error: " << scenario_path.string() << ": " << e.what() << "\n";
    return finding;
  } catch (const ValidationError& e) {
    err << "error: " << scenario_path.string() << ": " << e.what() << "\n";
    return finding;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return usage;
  }
  if (seed) sc.seed = *seed;
  try {
    auto datasets = sc.staged ? simulate_stage_scenario(sc) : simulate_cohort(sc);
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < datasets.size(); ++i) {
      write_dataset_files(datasets[i], out_dir, sc.groups[i].name);
      write_activity_line(out, sc.groups[i].name, datasets[i]);
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return finding;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return usage;
  }
  return ok;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeOptions {
  Metric metric = Metric::score;
  std::optional<std::string> split;
  bool paired = false;
  ComparisonOptions comparison;
};

/// Attempts from several summary CSVs, regrouped by cohort_id in order of first appearance.
inline std::vector<CohortDataset> load_cohorts(const std::vector<fs::path>& paths) {
  std::vector<CohortDataset> out;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw Error("cannot read '" + p.string() + "'");
    CohortDataset ds;
    try {
      ds = import_csv(in);
    } catch (const ParseError& e) {
      throw ParseError(p.string() + ": " + e.what());
    }
    for (auto& a : ds.attempts) {
      auto it = std::find_if(out.begin(), out.end(), [&](const CohortDataset& c) { return c.cohort_id == a.cohort_id; });
      if (it == out.end()) {
        out.push_back({});
        out.back().cohort_id = a.cohort_id;
        it = out.end() - 1;
      }
      it->attempts.push_back(std::move(a));
    }
  }
  for (auto& ds : out) sort_chronologically(ds.attempts);
  return out;
}

/// The report sections the analyze command prints.
inline std::vector<ComparisonReport> analysis_sections(const std::vector<CohortDataset>& cohorts,
                                                       const AnalyzeOptions& opt) {
  std::optional<PeriodSplit> split;
  if (opt.split) split = PeriodSplit::parse(*opt.split);
  return analyze(cohorts, opt.metric, split, opt.paired, opt.comparison);
}

inline int cmd_analyze(const std::vector<fs::path>& csvs, const AnalyzeOptions& opt, std::ostream& report,
                       std::ostream* table, std::ostream* json, std::ostream& err) {
  std::vector<CohortDataset> cohorts;
  try {
    cohorts = load_cohorts(csvs);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return finding;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return usage;
  }
  std::vector<ComparisonReport> sections;
  try {
    sections = analysis_sections(cohorts, opt);
  } catch (const EmptySlice& e) {
    err << "error: " << e.what() << "\n";
    return finding;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return usage;
  }
  write_text_report(report, sections);
  if (table) write_pairwise_csv(*table, sections);
  if (json) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& s : sections) j.push_back(to_json(s));
    *json << j.dump(2) << "\n";
  }
  return ok;
}

// ---------------------------------------------------------------------------
// export

/// Re-exports attempts from a JSONL store or from summary/detail CSVs.
inline int cmd_export(const std::optional<fs::path>& store_path, const std::vector<fs::path>& csvs,
                      const std::optional<std::string>& cohort, std::ostream& summary, std::ostream& detail,
                      std::ostream& err) {
  std::vector<AttemptRecord> records;
  try {
    if (store_path) {
      if (!fs::exists(*store_path)) throw Error("no store at '" + store_path->string() + "'");
      AttemptStore store(*store_path);
      records = store.snapshot();
    }
    for (const auto& p : csvs) {
      std::ifstream s(p);
      if (!s) throw Error("cannot read '" + p.string() + "'");
      std::ifstream d(detail_path_for(p));
      auto ds = d ? import_csv(s, &d) : import_csv(s);
      for (auto& a : ds.attempts) records.push_back(std::move(a));
    }
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return finding;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return usage;
  }
  if (cohort) std::erase_if(records, [&](const AttemptRecord& a) { return a.cohort_id != *cohort; });
  export_csv(records, summary, detail);
  return ok;
}

// ---------------------------------------------------------------------------
// serve

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<fs::path> store;
  std::vector<fs::path> banks;
  std::string cors_origin = "*";
  std::string token;
};

inline int cmd_serve(const ServeOptions& opt, std::ostream& out, std::ostream& err) {
  std::unique_ptr<AttemptStore> store;
  std::vector<ItemBank> banks;
  try {
    store = opt.store ? std::make_unique<AttemptStore>(*opt.store) : std::make_unique<AttemptStore>();
    for (const auto& p : opt.banks) {
      std::ifstream in(p);
      if (!in) throw Error("cannot read '" + p.string() + "'");
      banks.push_back(load_bank(in));
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return usage;
  }
  ServiceOptions so;
  so.cors_origin = opt.cors_origin;
  so.bearer_token = opt.token;
  Service service(*store, so);
  for (auto& b : banks) service.add_bank(std::move(b));

  httplib::Server server;
  service.bind(server);
  std::atomic<bool> running{true};
  std::thread sweeper([&] {
    while (running) {
      std::this_thread::sleep_for(std::chrono::seconds{1});
      service.sweep_expired();
    }
  });
  out << "listening on " << opt.host << ":" << opt.port << std::endl;
  bool listened = server.listen(opt.host, opt.port);
  running = false;
  sweeper.join();
  if (!listened) {
    err << "error: cannot listen on " << opt.host << ":" << opt.port << "\n";
    return usage;
  }
  return ok;
}

// ---------------------------------------------------------------------------
// argv entry point

namespace detail {

/// Opens `path` for writing, or returns nullptr for "-" / empty (stdout is used instead).
inline std::unique_ptr<std::ofstream> open_out(const std::string& path) {
  if (path.empty() || path == "-") return nullptr;
  auto f = std::make_unique<std::ofstream>(path, std::ios::binary);
  if (!*f) throw Error("cannot write '" + path + "'");
  return f;
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"adaptive testing toolkit: item banks, simulation, cohort statistics, test server"};
  app.require_subcommand(1);

  auto* bank = app.add_subcommand("bank", "item bank utilities");
  bank->require_subcommand(1);
  auto* validate = bank->add_subcommand("validate", "check a bank file");
  std::string bank_path;
  int levels = 0;
  validate->add_option("path", bank_path, "bank JSON file")->required();
  validate->add_option("--levels", levels, "levels that must be non-empty (default: the bank's num_levels)");

  auto* simulate = app.add_subcommand("simulate", "generate attempt logs from a scenario");
  std::string scenario_path, sim_out = ".";
  std::optional<std::uint64_t> sim_seed;
  simulate->add_option("scenario", scenario_path, "scenario JSON file")->required();
  simulate->add_option("--out", sim_out, "output directory")->capture_default_str();
  simulate->add_option("--seed", sim_seed, "override the scenario seed");

  auto* analyze = app.add_subcommand("analyze", "compare cohorts from summary CSVs");
  std::vector<std::string> csvs;
  std::string metric = "score", tails = "two", report_path, table_path, json_path;
  std::optional<std::string> split;
  AnalyzeOptions aopt;
  analyze->add_option("csv", csvs, "summary CSV files")->required();
  analyze->add_option("--metric", metric, "score | proportion | active-days")->capture_default_str();
  analyze->add_option("--split", split, "pre/post boundary: YYYY-MM-DD, or MM-DD within each year");
  analyze->add_flag("--paired", aopt.paired, "signed-rank test on per-student active days of 2 cohorts");
  analyze->add_option("--alpha", aopt.comparison.alpha, "significance level")->capture_default_str();
  analyze->add_option("--pass-threshold", aopt.comparison.pass_threshold, "passing score for --metric proportion")
      ->capture_default_str();
  analyze->add_option("--tails", tails, "one | two")->capture_default_str();
  analyze->add_option("--report", report_path, "text report file (default stdout)");
  analyze->add_option("--table", table_path, "pairwise significance table (CSV)");
  analyze->add_option("--json", json_path, "report as JSON");

  auto* serve = app.add_subcommand("serve", "run the HTTP test server");
  ServeOptions sopt;
  std::string listen = "127.0.0.1:8080", store_path;
  std::vector<std::string> bank_paths;
  serve->add_option("--listen", listen, "host:port")->envname("ADAPTEST_LISTEN")->capture_default_str();
  serve->add_option("--store", store_path, "attempt store (JSON lines)")->envname("ADAPTEST_STORE");
  serve->add_option("--bank", bank_paths, "bank files to preload");
  serve->add_option("--cors-origin", sopt.cors_origin, "allowed UI origin")->envname("ADAPTEST_CORS_ORIGIN")
      ->capture_default_str();
  serve->add_option("--token", sopt.token, "bearer token required on every request")->envname("ADAPTEST_TOKEN");

  auto* exp = app.add_subcommand("export", "write attempts as summary and detail CSV");
  std::string exp_store, exp_summary = "-", exp_detail;
  std::vector<std::string> exp_csvs;
  std::optional<std::string> exp_cohort;
  exp->add_option("--store", exp_store, "attempt store (JSON lines)");
  exp->add_option("--csv", exp_csvs, "summary CSV inputs (detail read from items/<name> next to each, if present)");
  exp->add_option("--cohort", exp_cohort, "only this cohort");
  exp->add_option("--summary", exp_summary, "summary output (default stdout)")->capture_default_str();
  exp->add_option("--detail", exp_detail, "per-item output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? ok : usage;
  }

  try {
    if (*validate) return cmd_bank_validate(bank_path, levels, out, err);
    if (*simulate) return cmd_simulate(scenario_path, sim_out, sim_seed, out, err);
    if (*analyze) {
      aopt.metric = metric_from_string(metric);
      aopt.split = split;
      if (tails == "one") aopt.comparison.tails = stats::Tails::one;
      else if (tails != "two") throw Error("--tails must be 'one' or 'two'");
      std::vector<fs::path> paths(csvs.begin(), csvs.end());
      auto rep = detail::open_out(report_path);
      auto tab = detail::open_out(table_path);
      auto js = detail::open_out(json_path);
      std::ostream& report_os = rep ? static_cast<std::ostream&>(*rep) : out;
      return cmd_analyze(paths, aopt, report_os, tab.get(), js.get(), err);
    }
    if (*serve) {
      auto colon = listen.rfind(':');
      if (colon == std::string::npos) throw Error("--listen must be host:port");
      sopt.host = listen.substr(0, colon);
      sopt.port = parse_int<int>(listen.substr(colon + 1));
      if (!store_path.empty()) sopt.store = store_path;
      sopt.banks.assign(bank_paths.begin(), bank_paths.end());
      return cmd_serve(sopt, out, err);
    }
    if (*exp) {
      if (exp_store.empty() && exp_csvs.empty()) throw Error("export needs --store or --csv");
      auto s = detail::open_out(exp_summary);
      std::ostream& summary_os = s ? static_cast<std::ostream&>(*s) : out;
      std::ostringstream discard;
      auto d = detail::open_out(exp_detail);
      std::optional<fs::path> sp;
      if (!exp_store.empty()) sp = exp_store;
      std::ostream& detail_os = d ? static_cast<std::ostream&>(*d) : discard;
      return cmd_export(sp, std::vector<fs::path>(exp_csvs.begin(), exp_csvs.end()), exp_cohort, summary_os,
                        detail_os, err);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return usage;
  }
  return usage;
}

}  // namespace adaptest::cli
