// Command-line front end. Talks to the library only through policysim.h.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "policysim/policysim.h"

namespace {

int fail(ps_status s) {
  std::cerr << "error (" << ps_status_name(s) << "): " << ps_last_error() << "\n";
  return 1;
}

// Prints and frees a library-owned string.
void emit(char* text, const std::string& out_path = {}) {
  if (out_path.empty()) {
    std::cout << text;
    if (*text && text[std::char_traits<char>::length(text) - 1] != '\n') std::cout << "\n";
  } else {
    std::ofstream(out_path, std::ios::binary) << text;
  }
  ps_string_free(text);
}

int run_cmd(const std::string& config, const std::string& resume, const std::string& log_path,
            const std::string& metrics_path) {
  ps_simulation* sim = nullptr;
  ps_status s = resume.empty() ? ps_simulation_create_from_file(config.c_str(), &sim)
                               : ps_simulation_resume(resume.c_str(), &sim);
  if (s != PS_OK) return fail(s);
  int done = 0;
  while (s == PS_OK && (s = ps_simulation_finished(sim, &done)) == PS_OK && !done) {
    int round = 0;
    ps_simulation_next_round(sim, &round);
    s = ps_simulation_step(sim);
    if (s == PS_OK) std::cerr << "round " << round << " done\n";
  }
  if (s == PS_OK && !log_path.empty()) s = ps_simulation_write_log(sim, log_path.c_str());
  char* text = nullptr;
  if (s == PS_OK && !metrics_path.empty()) {
    ps_replay* r = nullptr;
    char* log = nullptr;
    s = ps_simulation_log_text(sim, &log);
    if (s == PS_OK) s = ps_replay_from_text(log, &r);
    ps_string_free(log);
    if (s == PS_OK) s = ps_replay_metrics_csv(r, &text);
    ps_replay_destroy(r);
    if (s == PS_OK) emit(text, metrics_path);
  }
  if (s == PS_OK) {
    s = ps_simulation_metrics_json(sim, &text);
    if (s == PS_OK) emit(text);
  }
  const ps_status final = s;
  ps_simulation_destroy(sim);
  return final == PS_OK ? 0 : fail(final);
}

int replay_cmd(const std::string& log_path, const std::string& csv_path, bool summary) {
  ps_replay* r = nullptr;
  ps_status s = ps_replay_open(log_path.c_str(), &r);
  if (s != PS_OK) return fail(s);
  char* text = nullptr;
  if (summary) {
    s = ps_replay_summary_json(r, &text);
    if (s == PS_OK) emit(text);
  }
  if (s == PS_OK) {
    s = csv_path.empty() ? ps_replay_metrics_json(r, &text) : ps_replay_metrics_csv(r, &text);
    if (s == PS_OK) emit(text, csv_path);
  }
  ps_replay_destroy(r);
  return s == PS_OK ? 0 : fail(s);
}

// Runs a report-producing call and prints the report.
template <class F>
int report_cmd(F&& call) {
  char* text = nullptr;
  const ps_status s = call(&text);
  if (s != PS_OK) return fail(s);
  emit(text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"policysim: seeded social simulation sandbox"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ps_version()));

  std::string config, resume, log_path, out_path, meta, tuples, env = "synthetic";
  std::size_t nodes = 50, negatives = 3;
  std::uint64_t seed = 1;
  double p = 0.1, threshold = 0.8;
  int trials = 10;

  auto* run = app.add_subcommand("run", "Run a simulation");
  run->add_option("--config", config, "Run config (JSON)")->check(CLI::ExistingFile);
  run->add_option("--resume", resume, "Checkpoint directory to continue from")->check(CLI::ExistingDirectory);
  run->add_option("--log", log_path, "Where to write the event log")->default_val("events.jsonl");
  run->add_option("--metrics", out_path, "Optional metrics CSV");
  run->callback([&] {
    if (config.empty() == resume.empty()) throw CLI::ValidationError("run", "give exactly one of --config, --resume");
  });

  bool summary = false;
  auto* rep = app.add_subcommand("replay", "Rebuild state from an event log");
  rep->add_option("--log", log_path, "Event log")->required()->check(CLI::ExistingFile);
  rep->add_flag("--summary", summary, "Also print graph and stance summary");

  auto* met = app.add_subcommand("metrics", "Export per-round metrics as CSV");
  met->add_option("--log", log_path, "Event log")->required()->check(CLI::ExistingFile);
  met->add_option("--out", out_path, "CSV path")->required();

  auto* abm = app.add_subcommand("verify-abm", "Check belief averaging against pi . x0");
  abm->add_option("--nodes", nodes, "Graph size")->default_val(50);
  abm->add_option("--seed", seed, "Seed")->default_val(1);
  abm->add_option("--p", p, "Edge probability")->default_val(0.1);
  abm->add_option("--trials", trials, "Number of graphs")->default_val(10);

  auto* ing = app.add_subcommand("ingest", "Ingest a metadata directory");
  ing->add_option("--meta", meta, "Directory of metadata JSON files")->required();
  ing->add_option("--out", out_path, "Write the population here");

  auto* sft = app.add_subcommand("export-sft", "Export an SFT corpus from a log");
  sft->add_option("--log", log_path, "Event log")->required()->check(CLI::ExistingFile);
  sft->add_option("--tuples", tuples, "Tuples file instead of the log's reactions")->check(CLI::ExistingFile);
  sft->add_option("--out", out_path, "Output JSONL")->required();

  auto* dpo = app.add_subcommand("export-dpo", "Export a DPO corpus from a log");
  dpo->add_option("--log", log_path, "Event log")->required()->check(CLI::ExistingFile);
  dpo->add_option("--tuples", tuples, "Tuples file instead of the log's reactions")->check(CLI::ExistingFile);
  dpo->add_option("--out", out_path, "Output JSONL")->required();
  dpo->add_option("--negatives", negatives, "Rejected responses per record")->default_val(3);
  dpo->add_option("--threshold", threshold, "Similarity threshold")->default_val(0.8);
  dpo->add_option("--seed", seed, "Sampling seed")->default_val(1);

  std::string bench_options = "{}";
  auto* bench = app.add_subcommand("bench-bandit", "Synthetic bandit benchmark");
  bench->add_option("--env", env, "Environment")->check(CLI::IsMember({"synthetic"}))->default_val("synthetic");
  bench->add_option("--options", bench_options, "JSON overrides (dim, arms, rounds, seeds, ...)");

  CLI11_PARSE(app, argc, argv);

  if (*run) return run_cmd(config, resume, log_path, out_path);
  if (*rep) return replay_cmd(log_path, {}, summary);
  if (*met) return replay_cmd(log_path, out_path, false);
  if (*abm) {
    return report_cmd([&](char** out) { return ps_verify_abm(nodes, seed, p, trials, out); });
  }
  if (*ing) {
    return report_cmd([&](char** out) { return ps_ingest(meta.c_str(), out_path.empty() ? nullptr : out_path.c_str(), out); });
  }
  if (*sft) {
    return report_cmd([&](char** out) {
      return ps_export_sft(log_path.c_str(), tuples.empty() ? nullptr : tuples.c_str(), out_path.c_str(), out);
    });
  }
  if (*dpo) {
    return report_cmd([&](char** out) {
      return ps_export_dpo(log_path.c_str(), tuples.empty() ? nullptr : tuples.c_str(), out_path.c_str(), negatives,
                           threshold, seed, out);
    });
  }
  if (*bench) {
    return report_cmd([&](char** out) { return ps_bench_bandit(bench_options.c_str(), out); });
  }
  return 0;
}
