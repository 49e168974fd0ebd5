#include "policysim/policysim.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <set>
#include <string>
#include <utility>

#include <json.hpp>

#include "policysim/bench.hpp"
#include "policysim/config.hpp"
#include "policysim/dataprep.hpp"
#include "policysim/embedding.hpp"
#include "policysim/error.hpp"
#include "policysim/events.hpp"
#include "policysim/graph.hpp"
#include "policysim/simulation.hpp"

using namespace policysim;
using nlohmann::json;

struct ps_simulation {
  Simulation sim;
};

struct ps_replay {
  EventLog log;
  ReplayResult result;
};

namespace {

thread_local std::string g_last_error;

ps_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return PS_ERR_INVALID_ARGUMENT;
    case ErrorCode::kUnknownId: return PS_ERR_UNKNOWN_ID;
    case ErrorCode::kShape: return PS_ERR_SHAPE;
    case ErrorCode::kComponent: return PS_ERR_COMPONENT;
    case ErrorCode::kEmptyPool: return PS_ERR_EMPTY_POOL;
    case ErrorCode::kTemplate: return PS_ERR_TEMPLATE;
    case ErrorCode::kParse: return PS_ERR_PARSE;
    case ErrorCode::kConfig: return PS_ERR_CONFIG;
    case ErrorCode::kBackend: return PS_ERR_BACKEND;
    case ErrorCode::kCorruptLog: return PS_ERR_CORRUPT_LOG;
    case ErrorCode::kIo: return PS_ERR_IO;
  }
  return PS_ERR_INTERNAL;
}

// Runs f, translating exceptions into a status and the thread's last error.
template <class F>
ps_status guard(F&& f) {
  g_last_error.clear();
  try {
    f();
    return PS_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return PS_ERR_PARSE;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return PS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PS_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown exception";
    return PS_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  require(out != nullptr, "output pointer is null");
  *out = dup_string(s);
}

json metrics_array(const std::vector<RoundMetrics>& rows) {
  json a = json::array();
  for (const auto& m : rows) a.push_back(to_json(m));
  return a;
}

std::size_t embedding_dim(const EventLog& log) {
  const auto& h = log.header();
  if (h.contains("config") && h["config"].contains("embedding"))
    return h["config"]["embedding"].value("dimension", std::size_t{64});
  return 64;
}

std::vector<BehaviorTuple> load_tuples(const EventLog& log, const char* tuples_path) {
  if (tuples_path && *tuples_path) return read_tuples(tuples_path);
  return tuples_from_log(log);
}

}  // namespace

extern "C" {

const char* ps_last_error(void) { return g_last_error.c_str(); }

const char* ps_status_name(ps_status status) {
  switch (status) {
    case PS_OK: return "ok";
    case PS_ERR_INTERNAL: return "internal";
    default: break;
  }
  const int i = static_cast<int>(status) - 1;
  if (i >= 0 && i <= static_cast<int>(ErrorCode::kIo)) return to_string(static_cast<ErrorCode>(i)).data();
  return "unknown";
}

const char* ps_version(void) { return "0.1.0"; }

void ps_string_free(char* s) { std::free(s); }

ps_status ps_simulation_create(const char* config_json, ps_simulation** out) {
  return guard([&] {
    require(out != nullptr, "output pointer is null");
    *out = nullptr;
    json j = json::object();
    if (config_json && *config_json) {
      try {
        j = json::parse(config_json);
      } catch (const json::parse_error& e) {
        throw Error(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
      }
    }
    *out = new ps_simulation{Simulation(config_from_json(j))};
  });
}

ps_status ps_simulation_create_from_file(const char* config_path, ps_simulation** out) {
  return guard([&] {
    require(out != nullptr, "output pointer is null");
    require(config_path != nullptr, "config path is null");
    *out = nullptr;
    *out = new ps_simulation{Simulation(load_config(config_path))};
  });
}

ps_status ps_simulation_resume(const char* checkpoint_dir, ps_simulation** out) {
  return guard([&] {
    require(out != nullptr, "output pointer is null");
    require(checkpoint_dir != nullptr, "checkpoint directory is null");
    *out = nullptr;
    *out = new ps_simulation{Simulation::resume(std::filesystem::path(checkpoint_dir))};
  });
}

ps_status ps_simulation_step(ps_simulation* sim) {
  return guard([&] {
    require(sim != nullptr, "simulation is null");
    sim->sim.step();
  });
}

ps_status ps_simulation_run(ps_simulation* sim) {
  return guard([&] {
    require(sim != nullptr, "simulation is null");
    sim->sim.run();
  });
}

ps_status ps_simulation_next_round(const ps_simulation* sim, int* out) {
  return guard([&] {
    require(sim != nullptr && out != nullptr, "null argument");
    *out = sim->sim.next_round();
  });
}

ps_status ps_simulation_finished(const ps_simulation* sim, int* out) {
  return guard([&] {
    require(sim != nullptr && out != nullptr, "null argument");
    *out = sim->sim.finished() ? 1 : 0;
  });
}

ps_status ps_simulation_write_log(const ps_simulation* sim, const char* path) {
  return guard([&] {
    require(sim != nullptr && path != nullptr, "null argument");
    sim->sim.log().write(path);
  });
}

ps_status ps_simulation_log_text(const ps_simulation* sim, char** out) {
  return guard([&] {
    require(sim != nullptr, "simulation is null");
    put(out, sim->sim.log().serialize());
  });
}

ps_status ps_simulation_write_checkpoint(const ps_simulation* sim, const char* dir) {
  return guard([&] {
    require(sim != nullptr && dir != nullptr, "null argument");
    sim->sim.write_checkpoint(dir);
  });
}

ps_status ps_simulation_metrics_json(const ps_simulation* sim, char** out) {
  return guard([&] {
    require(sim != nullptr, "simulation is null");
    put(out, metrics_array(sim->sim.metrics()).dump());
  });
}

void ps_simulation_destroy(ps_simulation* sim) { delete sim; }

ps_status ps_replay_open(const char* log_path, ps_replay** out) {
  return guard([&] {
    require(out != nullptr && log_path != nullptr, "null argument");
    *out = nullptr;
    EventLog log = EventLog::read(log_path);
    ReplayResult r = replay(log);
    *out = new ps_replay{std::move(log), std::move(r)};
  });
}

ps_status ps_replay_from_text(const char* log_text, ps_replay** out) {
  return guard([&] {
    require(out != nullptr && log_text != nullptr, "null argument");
    *out = nullptr;
    EventLog log = EventLog::parse(log_text);
    ReplayResult r = replay(log);
    *out = new ps_replay{std::move(log), std::move(r)};
  });
}

ps_status ps_replay_metrics_json(const ps_replay* replay, char** out) {
  return guard([&] {
    require(replay != nullptr, "replay is null");
    put(out, metrics_array(replay->result.metrics).dump());
  });
}

ps_status ps_replay_metrics_csv(const ps_replay* replay, char** out) {
  return guard([&] {
    require(replay != nullptr, "replay is null");
    put(out, metrics_csv(replay->result.metrics));
  });
}

ps_status ps_replay_summary_json(const ps_replay* replay, char** out) {
  return guard([&] {
    require(replay != nullptr, "replay is null");
    const World& w = replay->result.world;
    json stances = json::object();
    for (const auto& id : w.agents()) stances[id] = w.smoothed(id);
    json j = {{"rounds", replay->result.rounds_replayed},
              {"agents", w.agents().size()},
              {"posts", w.posts().size()},
              {"edges", w.graph().edge_count()},
              {"last_seq", w.last_seq()},
              {"stances", stances}};
    put(out, j.dump());
  });
}

void ps_replay_destroy(ps_replay* replay) { delete replay; }

ps_status ps_verify_abm(size_t nodes, uint64_t seed, double edge_probability, int trials, char** report) {
  return guard([&] {
    require(report != nullptr, "output pointer is null");
    require(nodes >= 2, "need at least two nodes");
    require(edge_probability > 0.0 && edge_probability <= 1.0, "edge probability must be in (0, 1]");
    require(trials >= 1, "trials must be positive");
    json rows = json::array();
    double worst = 0.0;
    bool all_converged = true;
    for (const auto& t : abm_trials(nodes, edge_probability, seed, trials)) {
      rows.push_back({{"seed", t.seed},
                      {"iterations", t.iterations},
                      {"spread", t.spread},
                      {"converged", t.converged},
                      {"consensus", t.consensus},
                      {"predicted", t.predicted},
                      {"error", t.error}});
      worst = std::max(worst, t.error);
      all_converged = all_converged && t.converged;
    }
    json j = {{"nodes", nodes},
              {"edge_probability", edge_probability},
              {"seed", seed},
              {"trials", rows},
              {"all_converged", all_converged},
              {"max_error", worst}};
    put(report, j.dump(2));
  });
}

ps_status ps_ingest(const char* meta_dir, const char* out_path, char** report) {
  return guard([&] {
    require(meta_dir != nullptr && report != nullptr, "null argument");
    ScriptedBackend backend;
    IngestResult r = ingest(meta_dir, backend);
    if (out_path && *out_path) {
      json profiles = json::array();
      for (const auto& p : r.profiles) profiles.push_back(to_json(p));
      json edges = json::array();
      for (const auto& e : r.graph.edges())
        edges.push_back({{"follower", r.graph.node(e.follower)}, {"followee", r.graph.node(e.followee)}});
      json posts = json::array();
      for (const auto& p : r.posts) posts.push_back({{"author", p.author}, {"content", p.content}});
      json doc = {{"profiles", profiles}, {"edges", edges}, {"posts", posts}, {"report", r.report.to_json()}};
      write_file(out_path, doc.dump(2) + "\n");
    }
    json j = r.report.to_json();
    j["users"] = r.users.size();
    j["edges"] = r.graph.edge_count();
    j["posts"] = r.posts.size();
    put(report, j.dump(2));
  });
}

ps_status ps_export_sft(const char* log_path, const char* tuples_path, const char* out_path, char** report) {
  return guard([&] {
    require(log_path != nullptr && out_path != nullptr && report != nullptr, "null argument");
    const EventLog log = EventLog::read(log_path);
    const auto tuples = load_tuples(log, tuples_path);
    const SftExport data = export_sft(tuples, profiles_from_log(log));
    write_sft(out_path, data);
    json j = {{"tuples", tuples.size()},
              {"records", data.records.size()},
              {"skipped_unknown_user", data.skipped_unknown_user}};
    put(report, j.dump(2));
  });
}

ps_status ps_export_dpo(const char* log_path, const char* tuples_path, const char* out_path, size_t negatives,
                        double similarity_threshold, uint64_t seed, char** report) {
  return guard([&] {
    require(log_path != nullptr && out_path != nullptr && report != nullptr, "null argument");
    require(negatives >= 1, "negatives must be positive");
    const EventLog log = EventLog::read(log_path);
    const auto tuples = load_tuples(log, tuples_path);
    DpoConfig config;
    config.negatives = negatives;
    config.similarity_threshold = similarity_threshold;
    // A pool larger than J leaves room for inadmissible draws.
    const auto generator = log_sampled_candidates(tuples, 4 * negatives, seed);
    HashedEmbedder embedder(embedding_dim(log));
    const DpoExport data = export_dpo(tuples, profiles_from_log(log), generator, embedder, config);
    write_dpo(out_path, data, config);
    json j = {{"tuples", tuples.size()},
              {"records", data.records.size()},
              {"skipped_unknown_user", data.skipped_unknown_user},
              {"dropped_insufficient", data.dropped_insufficient}};
    put(report, j.dump(2));
  });
}

ps_status ps_bench_bandit(const char* options_json, char** result) {
  return guard([&] {
    require(result != nullptr, "output pointer is null");
    const json o = (options_json && *options_json) ? json::parse(options_json) : json::object();
    require(o.is_object(), "options must be a JSON object");
    static const std::set<std::string> known{"dim",  "arms",      "rounds", "noise",         "weight_norm",
                                             "seeds", "base_seed", "hidden", "learning_rate", "epsilon"};
    for (const auto& [k, v] : o.items())
      if (!known.count(k)) throw Error(ErrorCode::kInvalidArgument, "unknown option: " + k);
    SyntheticBenchConfig c;
    c.dim = o.value("dim", c.dim);
    c.arms = o.value("arms", c.arms);
    c.rounds = o.value("rounds", c.rounds);
    c.noise = o.value("noise", c.noise);
    c.weight_norm = o.value("weight_norm", c.weight_norm);
    c.seeds = o.value("seeds", c.seeds);
    c.base_seed = o.value("base_seed", c.base_seed);
    c.bandit.hidden = o.value("hidden", c.bandit.hidden);
    c.bandit.learning_rate = o.value("learning_rate", c.bandit.learning_rate);
    c.bandit.epsilon = o.value("epsilon", c.bandit.epsilon);
    require(c.dim >= 1 && c.arms >= 1 && c.rounds >= 1 && c.seeds >= 1, "sizes must be positive");
    c.bandit.validate();
    const SyntheticBenchResult r = run_synthetic_bench(c);
    json j = {{"dim", c.dim},
              {"arms", c.arms},
              {"rounds", c.rounds},
              {"seeds", c.seeds},
              {"ee", r.ee},
              {"epsilon_greedy", r.epsilon_greedy},
              {"random", r.random},
              {"mean_ee", SyntheticBenchResult::mean(r.ee)},
              {"mean_epsilon_greedy", SyntheticBenchResult::mean(r.epsilon_greedy)},
              {"mean_random", SyntheticBenchResult::mean(r.random)},
              {"ee_wins_over_random", r.ee_wins_over_random()}};
    put(result, j.dump(2));
  });
}

}  // extern "C"
