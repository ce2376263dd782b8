#pragma once

#include "pnpk/harness/scenario.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace pnpk {

class ConfigError : public std::runtime_error {
public:
    ConfigError(int line, const std::string& msg)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line(line) {}

    int line;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

inline double parse_number(const std::string& s, int line, const std::string& key) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    if (!s.empty() && *b == '+') ++b;
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e || !std::isfinite(v)) throw ConfigError(line, "'" + key + "': expected a number, got '" + s + "'");
    return v;
}

inline int parse_int(const std::string& s, int line, const std::string& key) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(line, "'" + key + "': expected an integer, got '" + s + "'");
    return v;
}

inline bool parse_bool(const std::string& s, int line, const std::string& key) {
    if (s == "true" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "no" || s == "0") return false;
    throw ConfigError(line, "'" + key + "': expected true or false, got '" + s + "'");
}

} // namespace detail

/// Reads a scenario from the sectioned key = value format documented in docs/config.md.
/// Unset keys keep the defaults of channel_scenario().
inline Scenario parse_scenario(std::istream& in) {
    using namespace detail;
    Scenario sc = channel_scenario();
    sc.sides.clear();
    std::string section;
    std::string line_text;
    int line = 0;
    std::set<std::string> seen;
    std::vector<std::string> species_order;
    std::map<std::string, SpeciesSpec> species;
    std::optional<double> dt, end;
    std::optional<int> steps;
    std::optional<std::vector<double>> partition;
    int time_line = 0;
    const std::map<std::string, Side> side_names{{"left", Side::left}, {"right", Side::right}, {"bottom", Side::bottom}, {"top", Side::top}};

    while (std::getline(in, line_text)) {
        ++line;
        const auto hash = line_text.find('#');
        const std::string text = trim(hash == std::string::npos ? line_text : line_text.substr(0, hash));
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']') throw ConfigError(line, "unterminated section header");
            section = trim(text.substr(1, text.size() - 2));
            static const std::set<std::string> known{"mesh", "physics", "species", "boundary", "time", "solver", "flow", "convergence", "debug"};
            if (!known.count(section)) throw ConfigError(line, "unknown section [" + section + "]");
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value'");
        const std::string key = trim(text.substr(0, eq));
        const std::string val = trim(text.substr(eq + 1));
        if (section.empty()) throw ConfigError(line, "key '" + key + "' outside of any section");
        if (key.empty() || val.empty()) throw ConfigError(line, "empty key or value");
        const std::string full = section + "." + key;
        if (!seen.insert(full).second) throw ConfigError(line, "duplicate key '" + full + "'");
        auto num = [&] { return parse_number(val, line, full); };
        auto integer = [&] { return parse_int(val, line, full); };
        auto unknown = [&] { return ConfigError(line, "unknown key '" + key + "' in [" + section + "]"); };

        if (section == "mesh") {
            if (key == "x0") sc.domain.x0 = num();
            else if (key == "x1") sc.domain.x1 = num();
            else if (key == "y0") sc.domain.y0 = num();
            else if (key == "y1") sc.domain.y1 = num();
            else if (key == "nx") sc.nx = integer();
            else if (key == "ny") sc.ny = integer();
            else if (key == "diagonal") {
                if (val == "right") sc.diagonal = DiagonalRule::right;
                else if (val == "union_jack") sc.diagonal = DiagonalRule::union_jack;
                else throw ConfigError(line, "'mesh.diagonal': expected right or union_jack");
            } else throw unknown();
        } else if (section == "physics") {
            if (key == "permittivity") sc.permittivity = num();
            else throw unknown();
        } else if (section == "species") {
            const auto dot_pos = key.find('.');
            if (dot_pos == std::string::npos) throw ConfigError(line, "species keys have the form NAME.field");
            const std::string name = key.substr(0, dot_pos), field = key.substr(dot_pos + 1);
            if (!species.count(name)) {
                species_order.push_back(name);
                species[name].label = name;
            }
            if (field == "charge") species[name].charge = num();
            else if (field == "diffusivity") species[name].diffusivity = num();
            else if (field == "initial") species[name].initial_log_density = num();
            else throw unknown();
        } else if (section == "boundary") {
            const auto dot_pos = key.find('.');
            const std::string side = key.substr(0, dot_pos);
            const std::string field = dot_pos == std::string::npos ? "" : key.substr(dot_pos + 1);
            auto it = side_names.find(side);
            if (it == side_names.end()) throw ConfigError(line, "unknown boundary side '" + side + "'");
            SideSpec& spec = sc.sides[it->second];
            if (field.empty()) {
                if (val == "dirichlet") spec.tag = BoundaryTag::Dirichlet;
                else if (val == "neumann") spec.tag = BoundaryTag::Neumann;
                else if (val == "robin") spec.tag = BoundaryTag::Robin;
                else if (val == "noflux") spec.tag = BoundaryTag::NoFlux;
                else throw ConfigError(line, "'" + full + "': expected dirichlet, neumann, robin or noflux");
            } else if (field == "value") {
                spec.values.clear();
                for (const auto& v : split_list(val)) spec.values.push_back(parse_number(v, line, full));
                if (spec.values.empty() || spec.values.size() > 2) throw ConfigError(line, "'" + full + "': one or two values expected");
            } else if (field == "kappa") {
                spec.kappa = num();
            } else if (field == "flow") {
                if (val == "noslip") spec.flow = FlowTag::NoSlip;
                else if (val == "fluxfree") spec.flow = FlowTag::FluxFree;
                else throw ConfigError(line, "'" + full + "': expected noslip or fluxfree");
            } else throw unknown();
        } else if (section == "time") {
            time_line = line;
            if (key == "dt") dt = num();
            else if (key == "end") end = num();
            else if (key == "steps") steps = integer();
            else if (key == "partition") {
                std::vector<double> t;
                for (const auto& v : split_list(val)) t.push_back(parse_number(v, line, full));
                partition = std::move(t);
            } else throw unknown();
        } else if (section == "solver") {
            if (key == "newton_rtol") sc.newton.relative_tolerance = num();
            else if (key == "newton_atol") sc.newton.absolute_tolerance = num();
            else if (key == "newton_max_iterations") sc.newton.max_iterations = integer();
            else if (key == "max_backtracks") sc.newton.max_backtracks = integer();
            else if (key == "dissipation_tolerance") sc.dissipation_tolerance = num();
            else if (key == "coupling_tolerance") sc.coupling_tolerance = num();
            else if (key == "coupling_max_iterations") sc.coupling_max_iterations = integer();
            else throw unknown();
        } else if (section == "flow") {
            if (key == "enabled") sc.flow_enabled = parse_bool(val, line, full);
            else if (key == "rho_f") sc.flow.rho_f = num();
            else if (key == "mu") sc.flow.mu = num();
            else if (key == "alpha") sc.flow.alpha = num();
            else if (key == "picard_tolerance") sc.flow.picard_tolerance = num();
            else if (key == "picard_max_iterations") sc.flow.picard_max_iterations = integer();
            else throw unknown();
        } else if (section == "convergence") {
            if (key == "nx") {
                sc.convergence_nx.clear();
                for (const auto& v : split_list(val)) sc.convergence_nx.push_back(parse_int(v, line, full));
            } else if (key == "eps") {
                sc.convergence_eps.clear();
                for (const auto& v : split_list(val)) sc.convergence_eps.push_back(parse_number(v, line, full));
            } else throw unknown();
        } else if (section == "debug") {
            if (key == "mutation") {
                if (val == "none") sc.flip_drift_sign = false;
                else if (val == "flip_drift_sign") sc.flip_drift_sign = true;
                else throw ConfigError(line, "'debug.mutation': expected none or flip_drift_sign");
            } else throw unknown();
        }
    }

    if (!species_order.empty()) {
        sc.species.clear();
        for (const auto& name : species_order) sc.species.push_back(species[name]);
    }
    if (partition) {
        if (dt || end || steps) throw ConfigError(time_line, "'time.partition' excludes dt, end and steps");
        sc.times = *partition;
    } else if (steps || dt || end) {
        if (!steps) throw ConfigError(time_line, "'time.steps' is required with dt or end");
        if (dt && end) throw ConfigError(time_line, "give either 'time.dt' or 'time.end', not both");
        if (*steps < 0) throw ConfigError(time_line, "'time.steps' must be nonnegative");
        const double h = dt ? *dt : (end ? *end / *steps : 0.0);
        if (!(h > 0.0) && *steps > 0) throw ConfigError(time_line, "time step must be positive");
        sc.times = uniform_times(h, *steps);
        if (end && *steps > 0) sc.times.back() = *end;
    }
    for (const auto& [side, spec] : sc.sides)
        if (spec.tag == BoundaryTag::Robin && !(spec.kappa > 0.0))
            throw ConfigError(0, "boundary." + side_name(side) + ".kappa must be positive");
    try {
        sc.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(0, e.what());
    }
    if (sc.species.empty()) throw ConfigError(0, "[species]: at least one species required");
    return sc;
}

inline Scenario parse_scenario_string(const std::string& text) {
    std::istringstream in(text);
    return parse_scenario(in);
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(0, "cannot open config file '" + path + "'");
    return parse_scenario(in);
}

} // namespace pnpk
