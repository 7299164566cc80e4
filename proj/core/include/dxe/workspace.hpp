#pragma once

#include <filesystem>
#include <memory>

#include "dxe/live_provider.hpp"
#include "dxe/service.hpp"
#include "dxe/simharness.hpp"

// A data directory wired into a ready Orchestrator:
//   models/*.model.yaml   cases/*.case.yaml   runs/<run-id>/
//   analysis/{synonyms,lexicons}.txt, analysis/synthesis_prompt.txt
//   population.yaml       (simulated provider)
namespace dxe {

class Workspace {
 public:
  // Copies the bundled assets into `data_dir` and registers the simulated
  // population. Files already present are kept, so re-running is harmless.
  static void init(const std::filesystem::path& data_dir, const std::filesystem::path& assets_dir);

  // Providers: "sim" always; "live" reads its endpoint from the
  // environment. Chain entries other than "template" go to the live
  // endpoint when one is configured, else to a local scripted synthesizer.
  explicit Workspace(const std::filesystem::path& data_dir, Orchestrator::Timestamp now = {});

  Orchestrator& orchestrator() { return *orchestrator_; }
  Registry& registry() { return registry_; }
  CaseLibrary& cases() { return cases_; }
  RunStore& store() { return store_; }
  const std::shared_ptr<SimulatedProvider>& sim() const { return sim_; }

 private:
  Registry registry_;
  CaseLibrary cases_;
  RunStore store_;
  std::shared_ptr<SimulatedProvider> sim_;
  std::unique_ptr<Orchestrator> orchestrator_;
};

}  // namespace dxe
