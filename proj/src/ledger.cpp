#include "hdsa/ledger.hpp"

#include <nlohmann/json.hpp>

namespace hdsa {

std::string ledger_to_json(const CostLedger& ledger) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < ledger.samples.size(); ++i) {
    const auto& s = ledger.samples[i];
    rows.push_back({{"sample", i},
                    {"data_generation", s.data_generation},
                    {"inverse_solve", s.inverse_solve},
                    {"lowrank_build", s.lowrank_build},
                    {"risk_sensitivity", s.risk_sensitivity},
                    {"map_sensitivity", s.map_sensitivity},
                    {"newton_steps", s.newton_steps},
                    {"cg_iterations", s.cg_iterations},
                    {"linesearch_extra", s.linesearch_extra},
                    {"lowrank_rank", s.lowrank_rank},
                    {"converged", s.converged},
                    {"total", s.total()}});
  }
  nlohmann::json j = {
      {"samples", rows},
      {"misc_solves", ledger.misc_solves},
      {"totals",
       {{"data_generation", ledger.phase_total(&SampleCosts::data_generation)},
        {"inverse_solve", ledger.phase_total(&SampleCosts::inverse_solve)},
        {"lowrank_build", ledger.phase_total(&SampleCosts::lowrank_build)},
        {"risk_sensitivity", ledger.phase_total(&SampleCosts::risk_sensitivity)},
        {"map_sensitivity", ledger.phase_total(&SampleCosts::map_sensitivity)},
        {"grand_total", ledger.grand_total()}}}};
  return j.dump(2);
}

}  // namespace hdsa
