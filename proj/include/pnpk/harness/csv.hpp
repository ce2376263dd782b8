#pragma once

#include "pnpk/harness/convergence.hpp"
#include "pnpk/harness/energy.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace pnpk {

class CsvError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numeric table with a header row. Values are written with 17 significant
/// digits so that parse_csv(emit_csv(t)) == t bit for bit.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    bool operator==(const CsvTable& o) const {
        if (header != o.header || rows.size() != o.rows.size()) return false;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != o.rows[r].size()) return false;
            for (std::size_t c = 0; c < rows[r].size(); ++c) {
                const double a = rows[r][c], b = o.rows[r][c];
                if (std::isnan(a) ? !std::isnan(b) : std::memcmp(&a, &b, sizeof a) != 0) return false;
            }
        }
        return true;
    }
};

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string emit_csv(const CsvTable& t) {
    std::string out;
    for (std::size_t c = 0; c < t.header.size(); ++c) out += (c ? "," : "") + t.header[c];
    out += '\n';
    for (const auto& row : t.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + format_double(row[c]);
        out += '\n';
    }
    return out;
}

inline CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> f;
        std::size_t start = 0;
        while (true) {
            const auto comma = s.find(',', start);
            f.push_back(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        return f;
    };
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size())
            throw CsvError("csv line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) + " fields");
        std::vector<double> row;
        for (const auto& f : fields) {
            char* end = nullptr;
            const double v = std::strtod(f.c_str(), &end);
            if (f.empty() || *end != '\0') throw CsvError("csv line " + std::to_string(lineno) + ": bad number '" + f + "'");
            row.push_back(v);
        }
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty()) throw CsvError("csv: missing header");
    return t;
}

inline CsvTable rates_table(const ConvergenceTable& ct) {
    CsvTable t{{"h", "eps", "h1_seminorm_error", "newton_iters", "rate_fit"}, {}};
    for (const auto& r : ct.rows) {
        const auto it = ct.rates.find(r.eps);
        const double rate = it == ct.rates.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
        t.rows.push_back({r.h, r.eps, r.error, static_cast<double>(r.newton_iters), rate});
    }
    return t;
}

inline CsvTable ledger_table(const EnergyLedger& ledger, std::size_t species_count) {
    CsvTable t;
    t.header = {"step", "t", "energy", "dissipation", "delta_E", "margin"};
    for (std::size_t i = 1; i <= species_count; ++i) t.header.push_back("mass_species_" + std::to_string(i));
    t.header.push_back("kinetic_energy");
    for (const auto& r : ledger.rows) {
        std::vector<double> row{static_cast<double>(r.step), r.t, r.energy, r.dissipation, r.delta_E, r.margin};
        require(r.masses.size() == species_count, "ledger_table: species count mismatch");
        row.insert(row.end(), r.masses.begin(), r.masses.end());
        row.push_back(r.kinetic_energy);
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace pnpk
