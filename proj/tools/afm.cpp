// afm: serve the radio, recompute stats from a log, or run the closed-loop
// simulation.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "afm/analytics.hpp"
#include "afm/config.hpp"
#include "afm/http_api.hpp"
#include "afm/radio_store.hpp"
#include "afm/simulation.hpp"

#include <CLI11.hpp>

namespace {

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw afm::LoadError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Accepts either an event log (records carry "seq" and "kind") or one Rating
// object per line.
std::vector<afm::Rating> ratings_from_jsonl(const std::string& text) {
  std::vector<afm::Rating> plain;
  std::istringstream lines(text);
  std::string line;
  bool is_log = false;
  while (std::getline(lines, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = afm::Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) continue;  // torn tail
    if (j.contains("seq") && j.contains("kind")) {
      is_log = true;
      break;
    }
    plain.push_back(j.get<afm::Rating>());
  }
  if (!is_log) return plain;
  const auto parsed = afm::parse_event_log(text);
  return afm::RadioStore::replay(parsed.records).ratings();
}

int cmd_serve(const std::string& config_path, const std::string& catalog_override) {
  afm::ServiceConfig cfg = config_path.empty() ? afm::ServiceConfig{} : afm::load_config_file(config_path);
  afm::apply_env_overrides(cfg);
  if (!catalog_override.empty()) cfg.catalog_path = catalog_override;
  cfg.validate();
  afm::RadioService service(cfg, afm::load_catalog_file(cfg.catalog_path));

  httplib::Server server;
  afm::mount_routes(server, service);
  const auto [host, port] = afm::parse_bind_addr(cfg.bind_addr);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  service.start_worker();
  std::fprintf(stderr, "afm: listening on %s:%d\n", host.c_str(), port);
  const bool ok = server.listen(host, port);
  service.stop_worker();
  g_server = nullptr;
  if (!ok && server.is_running()) return 1;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"afm: AI radio curation engine"};
  app.require_subcommand(1);

  std::string config_path, catalog_override;
  auto* serve = app.add_subcommand("serve", "run the HTTP service and generation worker");
  serve->add_option("--config", config_path, "JSON config file");
  serve->add_option("--catalog", catalog_override, "catalog fixture (overrides catalog_path)");

  std::string stats_input, unit = "per_song_mean";
  bool csv = false;
  auto* stats = app.add_subcommand("stats", "recompute rating statistics from an event log or ratings file");
  stats->add_option("--input", stats_input, "event log or ratings JSON-lines file")->required();
  stats->add_option("--unit", unit, "per_song_mean or per_rating");
  stats->add_flag("--csv", csv, "print the correlation matrix as CSV");

  afm::SimulationConfig sim;
  std::string sim_catalog = "fixtures/catalog.json", sim_out, population = "linear", sim_json;
  auto* simulate = app.add_subcommand("simulate", "closed-loop simulation with synthetic listeners");
  simulate->add_option("--catalog", sim_catalog, "catalog fixture");
  simulate->add_option("--epochs", sim.epochs);
  simulate->add_option("--primes-per-epoch", sim.primes_per_epoch);
  simulate->add_option("--gamma", sim.gamma);
  simulate->add_option("--M", sim.M);
  simulate->add_option("--seed", sim.seed);
  simulate->add_option("--listeners", sim.population_size);
  simulate->add_option("--ratings-per-song", sim.ratings_per_song);
  simulate->add_option("--noise-sd", sim.noise_sd);
  simulate->add_option("--ridge-lambda", sim.ridge_lambda);
  simulate->add_option("--population", population, "linear or quadratic");
  simulate->add_option("--out", sim_out, "CSV report path (stdout when omitted)");
  simulate->add_option("--json", sim_json, "also write the report as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) return cmd_serve(config_path, catalog_override);

    if (*stats) {
      const auto ratings = ratings_from_jsonl(read_file(stats_input));
      const auto report = afm::compute_stats(ratings, afm::parse_analysis_unit(unit));
      if (csv)
        std::cout << afm::correlation_csv(report.correlations);
      else
        std::cout << afm::stats_to_json(report).dump() << "\n";
      return 0;
    }

    if (*simulate) {
      sim.population = afm::parse_population_kind(population);
      const auto reports = afm::run_simulation(afm::load_catalog_file(sim_catalog), sim);
      const std::string text = afm::reports_to_csv(reports);
      if (sim_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream(sim_out, std::ios::binary) << text;
      }
      if (!sim_json.empty()) std::ofstream(sim_json) << afm::Json(reports).dump(2) << "\n";
      return 0;
    }
  } catch (const afm::ValidationError& e) {
    std::cerr << "afm: " << e.what() << "\n";
    if (*simulate) std::cerr << simulate->help();
    if (*stats) std::cerr << stats->help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "afm: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
