#include "dxe/workspace.hpp"

#include "dxe/error.hpp"
#include "dxe/text.hpp"

namespace dxe {

namespace fs = std::filesystem;

namespace {

void copy_missing(const fs::path& from, const fs::path& to) {
  if (!fs::exists(from)) throw Error(ErrorCode::Io, "asset not found: " + from.string());
  if (fs::is_directory(from)) {
    fs::create_directories(to);
    for (const auto& e : fs::directory_iterator(from)) copy_missing(e.path(), to / e.path().filename());
  } else if (!fs::exists(to)) {
    fs::copy_file(from, to);
  }
}

}  // namespace

void Workspace::init(const fs::path& data_dir, const fs::path& assets_dir) {
  fs::create_directories(data_dir / "runs");
  copy_missing(assets_dir / "cases", data_dir / "cases");
  copy_missing(assets_dir / "analysis", data_dir / "analysis");
  copy_missing(assets_dir / "sim" / "population.yaml", data_dir / "population.yaml");

  Registry registry(data_dir / "models");
  const auto pop = load_population((data_dir / "population.yaml").string());
  for (const auto& m : pop.members) {
    if (!registry.find(m.descriptor.model_id)) registry.register_model(m.descriptor);
  }
}

Workspace::Workspace(const fs::path& data_dir, Orchestrator::Timestamp now)
    : registry_(data_dir / "models"), cases_(data_dir / "cases"), store_(data_dir / "runs") {
  std::vector<SimModelProfile> profiles;
  if (fs::exists(data_dir / "population.yaml")) {
    profiles = load_population((data_dir / "population.yaml").string()).profiles();
  }
  sim_ = std::make_shared<SimulatedProvider>(std::move(profiles));

  auto live_config = LiveProviderConfig::from_environment();
  const bool live_configured = !live_config.base_url.empty() && !live_config.api_key.empty();
  auto live = std::make_shared<LiveProvider>(std::move(live_config));
  std::shared_ptr<SynthesisPort> synthesizer;
  if (live_configured) {
    synthesizer = live;
  } else {
    synthesizer = std::make_shared<ScriptedSynthesizer>();
  }

  std::map<std::string, std::shared_ptr<ProviderPort>> providers{{"sim", sim_}, {"live", live}};
  orchestrator_ = std::make_unique<Orchestrator>(registry_, cases_, store_, AnalysisAssets::load(data_dir / "analysis"),
                                                 std::move(providers), std::move(synthesizer), std::move(now));
}

}  // namespace dxe
