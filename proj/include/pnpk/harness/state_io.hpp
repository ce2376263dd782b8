#pragma once

#include "pnpk/flow_dg.hpp"
#include "pnpk/pnp.hpp"

#include <nlohmann/json.hpp>

namespace pnpk {

/// {"t": .., "eta": [[..], ..], "phi": [..], "velocity": [..], "pressure": [..]}
/// Doubles round-trip exactly through nlohmann's shortest representation.
inline nlohmann::json state_to_json(const PnpState& s, const FlowState* flow = nullptr) {
    nlohmann::json j;
    j["t"] = s.t;
    j["eta"] = nlohmann::json::array();
    for (const auto& e : s.eta) j["eta"].push_back(e.values);
    j["phi"] = s.phi.values;
    if (flow) {
        j["velocity"] = flow->velocity;
        j["pressure"] = flow->pressure;
    }
    return j;
}

inline PnpState pnp_state_from_json(const nlohmann::json& j, const PnpSystem& sys) {
    PnpState s;
    s.t = j.at("t").get<double>();
    const auto& eta = j.at("eta");
    require(eta.is_array() && static_cast<Index>(eta.size()) == sys.species_count(), "state json: wrong species count");
    for (const auto& e : eta) s.eta.emplace_back(sys.space(), e.get<std::vector<double>>());
    s.phi = FieldP1(sys.space(), j.at("phi").get<std::vector<double>>());
    return s;
}

inline FlowState flow_state_from_json(const nlohmann::json& j) {
    FlowState f;
    f.t = j.at("t").get<double>();
    f.velocity = j.at("velocity").get<std::vector<double>>();
    f.pressure = j.at("pressure").get<std::vector<double>>();
    return f;
}

} // namespace pnpk
