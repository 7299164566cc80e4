#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dxe/error.hpp"
#include "dxe/http_api.hpp"
#include "dxe/json_io.hpp"
#include "dxe/text.hpp"
#include "dxe/workspace.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kValidation = 2, kProvider = 3, kNotFound = 4, kInternal = 5 };

int exit_code_for(dxe::ErrorCode code) {
  using dxe::ErrorCode;
  switch (code) {
    case ErrorCode::NotFound:
    case ErrorCode::CaseNotFound: return kNotFound;
    case ErrorCode::NoResponders: return kProvider;
    case ErrorCode::Io: return kInternal;
    default: return kValidation;
  }
}

std::string default_data_dir() {
  if (const char* v = std::getenv("DXE_DATA_DIR")) return v;
  return "dxe-data";
}

struct FilterArgs {
  std::vector<std::string> regions;
  std::vector<std::string> cost_tiers;
  std::vector<std::string> models;
  std::string min_release;
  bool include_disabled = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--region", regions, "Restrict to origin regions (US, Europe, China, Other)");
    cmd->add_option("--cost-tier", cost_tiers, "Restrict to cost tiers (Free, Paid)");
    cmd->add_option("--model", models, "Restrict to these model ids");
    cmd->add_option("--min-release", min_release, "Only models released on or after YYYY-MM-DD");
    cmd->add_flag("--include-disabled", include_disabled, "Also select disabled models");
  }

  dxe::ModelFilter build() const {
    json j = json::object();
    if (!regions.empty()) j["regions"] = regions;
    if (!cost_tiers.empty()) j["cost_tiers"] = cost_tiers;
    if (!models.empty()) j["ids"] = models;
    if (!min_release.empty()) j["min_release_date"] = min_release;
    j["enabled_only"] = !include_disabled;
    return dxe::model_filter_from_json(j);
  }
};

struct RunArgs {
  std::string provider = "sim";
  std::vector<std::string> chain;
  std::optional<std::uint64_t> seed;
  std::int64_t timeout_ms = 30000;
  int retries = 1;
  int parallel = 8;
  FilterArgs filter;

  void attach(CLI::App* cmd) {
    cmd->add_option("--provider", provider, "Provider: sim or live")->check(CLI::IsMember({"sim", "live"}));
    cmd->add_option("--seed", seed, "Seed for the simulated provider");
    cmd->add_option("--chain", chain, "Synthesizer chain entries as ref[:timeout_ms]; 'template' is implicit last");
    cmd->add_option("--timeout-ms", timeout_ms, "Per-model attempt timeout")->check(CLI::PositiveNumber);
    cmd->add_option("--retries", retries, "Retries for network failures")->check(CLI::Range(0, 10));
    cmd->add_option("--parallel", parallel, "Maximum concurrent model queries")->check(CLI::Range(1, 256));
    filter.attach(cmd);
  }

  dxe::RunRequest request(const std::string& case_id) const {
    dxe::RunRequest r;
    r.case_id = case_id;
    r.filter = filter.build();
    r.provider = provider;
    r.seed = seed;
    r.per_model_timeout = dxe::Millis{timeout_ms};
    r.max_retries = retries;
    r.max_parallel = parallel;
    if (!chain.empty()) {
      r.chain.clear();
      for (const auto& entry : chain) {
        dxe::ChainEntry e;
        const auto colon = entry.rfind(':');
        if (colon != std::string::npos && colon + 1 < entry.size() &&
            entry.find_first_not_of("0123456789", colon + 1) == std::string::npos) {
          e.synthesizer_ref = entry.substr(0, colon);
          e.timeout = dxe::Millis{std::stoll(entry.substr(colon + 1))};
        } else {
          e.synthesizer_ref = entry;
        }
        r.chain.push_back(e);
      }
      if (r.chain.back().synthesizer_ref != "template") r.chain.push_back({"template", dxe::Millis{1000}});
    }
    return r;
  }
};

void print_models(const std::vector<dxe::ModelDescriptor>& models) {
  std::printf("%-24s %-8s %-5s %-7s %-10s %s\n", "model_id", "region", "cost", "size", "released", "enabled");
  for (const auto& m : models) {
    std::printf("%-24s %-8s %-5s %-7s %-10s %s\n", m.model_id.c_str(), std::string(dxe::to_string(m.origin_region)).c_str(),
                std::string(dxe::to_string(m.cost_tier)).c_str(), std::string(dxe::to_string(m.size_class)).c_str(),
                (m.release_date ? dxe::format_date(*m.release_date) : std::string("-")).c_str(), m.enabled ? "yes" : "no");
  }
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw dxe::Error(dxe::ErrorCode::NotFound, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_run_summary(dxe::Workspace& ws, const std::string& run_id) {
  const auto rec = ws.store().load(run_id);
  std::cout << run_id << "  case=" << rec.case_id << "  status=" << rec.status;
  if (rec.differential) {
    const auto& d = *rec.differential;
    std::cout << "  responders=" << d.responding_count;
    const auto primary = d.in_tier(dxe::Tier::Primary);
    if (!primary.empty()) std::cout << "  primary=" << primary.front()->display_label;
  }
  std::cout << "\n";
}

dxe::HttpApi* g_api = nullptr;

void on_signal(int) {
  if (g_api) g_api->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dxe: multi-model diagnostic ensemble runner"};
  app.require_subcommand(1);
  std::string data_dir = default_data_dir();
  app.add_option("--data", data_dir, "Workspace directory (env DXE_DATA_DIR)");

  std::string assets_dir = DXE_DEFAULT_ASSETS_DIR;
  auto* init = app.add_subcommand("init", "Create a workspace from the bundled assets");
  init->add_option("--assets", assets_dir, "Asset directory to copy from");

  auto* models = app.add_subcommand("models", "Inspect or extend the model registry");
  models->require_subcommand(1);
  auto* models_list = models->add_subcommand("list", "List registered models");
  FilterArgs list_filter;
  list_filter.attach(models_list);
  auto* models_add = models->add_subcommand("add", "Register a model from a descriptor YAML file");
  std::string descriptor_path;
  models_add->add_option("file", descriptor_path, "Descriptor document")->required()->check(CLI::ExistingFile);

  auto* cases = app.add_subcommand("cases", "Inspect or extend the case library");
  cases->require_subcommand(1);
  auto* cases_list = cases->add_subcommand("list", "List cases");
  auto* cases_add = cases->add_subcommand("add", "Add a case from a YAML document");
  std::string case_path;
  cases_add->add_option("file", case_path, "Case document")->required()->check(CLI::ExistingFile);

  auto* run = app.add_subcommand("run", "Run one case through the ensemble");
  std::string case_id;
  run->add_option("--case", case_id, "Case id")->required();
  RunArgs run_args;
  run_args.attach(run);

  auto* batch = app.add_subcommand("batch", "Run several cases, then print batch metrics");
  std::vector<std::string> batch_cases;
  batch->add_option("--cases", batch_cases, "Case ids (default: all)");
  RunArgs batch_args;
  batch_args.attach(batch);
  std::string batch_format = "text";
  batch->add_option("--format", batch_format)->check(CLI::IsMember({"text", "machine"}));

  auto* metrics = app.add_subcommand("metrics", "Aggregate tables over stored runs");
  std::vector<std::string> metric_runs;
  metrics->add_option("--runs", metric_runs, "Run ids (default: all stored runs)");
  std::string metrics_format = "text";
  metrics->add_option("--format", metrics_format)->check(CLI::IsMember({"text", "machine"}));

  auto* report = app.add_subcommand("report", "Print the report of a stored run");
  std::string report_run;
  report->add_option("--run", report_run, "Run id")->required();
  std::string report_format = "text";
  report->add_option("--format", report_format)->check(CLI::IsMember({"text", "machine"}));

  auto* runs = app.add_subcommand("runs", "List stored runs");

  auto* restratify = app.add_subcommand("restratify", "Recompute a stored run over a model subset");
  std::string restratify_run;
  std::vector<std::string> restratify_models;
  restratify->add_option("--run", restratify_run, "Run id")->required();
  restratify->add_option("--model", restratify_models, "Model ids to keep")->required();

  auto* verify = app.add_subcommand("verify", "Replay stored runs and compare with what was stored");
  std::vector<std::string> verify_runs;
  verify->add_option("--run", verify_runs, "Run ids (default: all)");

  auto* serve = app.add_subcommand("serve", "Serve the /v1 HTTP API");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host);
  serve->add_option("--port", port)->check(CLI::Range(0, 65535));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    const fs::path data = data_dir;
    if (init->parsed()) {
      dxe::Workspace::init(data, assets_dir);
      dxe::Workspace ws(data);
      std::cout << "initialized " << data.string() << ": " << ws.registry().size() << " models, "
                << ws.cases().list().size() << " cases\n";
      return kOk;
    }
    if (!fs::exists(data / "models")) {
      std::cerr << "error: " << data.string() << " is not a workspace; run `dxe init` first\n";
      return kNotFound;
    }
    dxe::Workspace ws(data);
    auto& orch = ws.orchestrator();

    if (models_list->parsed()) {
      print_models(ws.registry().select_models(list_filter.build()));
    } else if (models_add->parsed()) {
      const auto id = ws.registry().register_model(dxe::parse_model_document(read_file(descriptor_path)));
      std::cout << "registered " << id << "\n";
    } else if (cases_list->parsed()) {
      for (const auto& c : ws.cases().list()) std::printf("%-22s %s\n", c.case_id.c_str(), c.title.c_str());
    } else if (cases_add->parsed()) {
      const auto c = dxe::parse_case_document(read_file(case_path));
      ws.cases().add(c);
      std::cout << "added " << c.case_id << "\n";
    } else if (run->parsed()) {
      std::string id;
      try {
        id = orch.run_case(run_args.request(case_id));
      } catch (const dxe::Error& e) {
        if (e.code() == dxe::ErrorCode::NoResponders) std::cerr << "warning: run stored without responders\n";
        throw;
      }
      print_run_summary(ws, id);
    } else if (batch->parsed()) {
      if (batch_cases.empty()) {
        for (const auto& c : ws.cases().list()) batch_cases.push_back(c.case_id);
      }
      std::vector<std::string> ids;
      int failed = 0;
      for (const auto& c : batch_cases) {
        try {
          ids.push_back(orch.run_case(batch_args.request(c)));
          print_run_summary(ws, ids.back());
        } catch (const dxe::Error& e) {
          if (e.code() != dxe::ErrorCode::NoResponders) throw;
          std::cerr << c << ": " << e.what() << "\n";
          ++failed;
        }
      }
      if (ids.empty()) throw dxe::Error(dxe::ErrorCode::NoResponders, "no case in the batch had responders");
      const auto m = orch.batch_metrics(ids);
      std::cout << "\n" << (batch_format == "text" ? dxe::render_metrics_text(m) : dxe::metrics_to_json(m).dump(2) + "\n");
      if (failed > 0) return kProvider;
    } else if (metrics->parsed()) {
      if (metric_runs.empty()) metric_runs = ws.store().list();
      const auto m = orch.batch_metrics(metric_runs);
      std::cout << (metrics_format == "text" ? dxe::render_metrics_text(m) : dxe::metrics_to_json(m).dump(2) + "\n");
    } else if (report->parsed()) {
      const auto rec = ws.store().load(report_run);
      if (!rec.report) throw dxe::Error(dxe::ErrorCode::NoResponders, "run " + report_run + " produced no report");
      std::cout << (report_format == "text" ? dxe::render_report_text(*rec.report) : json(*rec.report).dump(2) + "\n");
    } else if (runs->parsed()) {
      for (const auto& id : ws.store().list()) print_run_summary(ws, id);
    } else if (restratify->parsed()) {
      const std::set<std::string> keep(restratify_models.begin(), restratify_models.end());
      std::cout << dxe::restratify_to_json(orch.restratify(restratify_run, keep)).dump(2) << "\n";
    } else if (verify->parsed()) {
      if (verify_runs.empty()) verify_runs = ws.store().list();
      int bad = 0;
      for (const auto& id : verify_runs) {
        const auto result = orch.verify(id);
        std::cout << id << (result.ok() ? "  ok" : "  MISMATCH") << "\n";
        for (const auto& m : result.mismatches) std::cout << "  " << m << "\n";
        if (!result.ok()) ++bad;
      }
      if (bad > 0) return kValidation;
    } else if (serve->parsed()) {
      dxe::HttpApi api(orch);
      const int bound = api.bind(host, port);
      if (bound < 0) {
        std::cerr << "error: cannot bind " << host << ":" << port << "\n";
        return kInternal;
      }
      g_api = &api;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on http://" << host << ":" << bound << "/v1" << std::endl;
      api.serve();
      api.wait_for_jobs();
      g_api = nullptr;
    }
    return kOk;
  } catch (const dxe::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
}
