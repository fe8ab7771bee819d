#include "mupost/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "mupost/errors.hpp"
#include "mupost/mat.hpp"

namespace mupost {

namespace {
constexpr double kB0ThresholdSmm2 = 50.0; // entries below this count as b0
constexpr double kUnitNormTol = 1e-6;
} // namespace

AcquisitionProtocol::AcquisitionProtocol(std::vector<GradientEntry> entries)
    : entries_(std::move(entries)) {
    validate();
    build_shells();
}

void AcquisitionProtocol::validate() const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (e.bvalue < 0.0)
            throw ValidationError("protocol entry " + std::to_string(i) + ": negative b-value");
        if (e.delta_small <= 0.0)
            throw ValidationError("protocol entry " + std::to_string(i) +
                                  ": gradient duration must be positive");
        if (e.delta_big < e.delta_small)
            throw ValidationError("protocol entry " + std::to_string(i) +
                                  ": separation smaller than duration");
        double n2 = e.direction[0] * e.direction[0] + e.direction[1] * e.direction[1] +
                    e.direction[2] * e.direction[2];
        bool is_b0 = e.bvalue * 1000.0 < kB0ThresholdSmm2;
        if (is_b0) {
            if (n2 != 0.0 && std::fabs(std::sqrt(n2) - 1.0) > kUnitNormTol)
                throw ValidationError("protocol entry " + std::to_string(i) +
                                      ": b0 direction must be zero or unit length");
        } else if (std::fabs(std::sqrt(n2) - 1.0) > kUnitNormTol) {
            throw ValidationError("protocol entry " + std::to_string(i) +
                                  ": direction must have unit norm at b > 0");
        }
    }
}

void AcquisitionProtocol::build_shells() {
    b0_.clear();
    shells_.clear();
    std::map<long, Shell> grouped; // key: b rounded to 1 s/mm^2
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        double b_smm2 = entries_[i].bvalue * 1000.0;
        if (b_smm2 < kB0ThresholdSmm2) {
            b0_.push_back(i);
            continue;
        }
        long key = std::lround(b_smm2);
        auto& s = grouped[key];
        s.bvalue = static_cast<double>(key) / 1000.0;
        s.entries.push_back(i);
    }
    shells_.reserve(grouped.size());
    for (auto& [key, shell] : grouped) shells_.push_back(std::move(shell));
}

AcquisitionProtocol AcquisitionProtocol::shell_mask(double bmax_s_mm2,
                                                    std::vector<std::size_t>* kept_indices) const {
    std::vector<GradientEntry> kept;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        double b_smm2 = entries_[i].bvalue * 1000.0;
        if (b_smm2 < kB0ThresholdSmm2 || b_smm2 <= bmax_s_mm2 + 0.5) {
            kept.push_back(entries_[i]);
            idx.push_back(i);
        }
    }
    if (kept.empty()) throw ValidationError("shell mask removed every entry");
    if (kept_indices) *kept_indices = std::move(idx);
    return AcquisitionProtocol(std::move(kept));
}

AcquisitionProtocol load_protocol(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open protocol file: " + path);
    std::vector<GradientEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        double b, gx, gy, gz, ds, db;
        if (!(ss >> b)) continue; // blank or comment-only line
        if (!(ss >> gx >> gy >> gz >> ds >> db)) {
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": malformed protocol line (expected 6 columns)");
        }
        double trailing;
        if (ss >> trailing)
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": malformed protocol line (extra columns)");
        GradientEntry e;
        e.bvalue = b / 1000.0; // s/mm^2 -> ms/um^2
        e.direction = {gx, gy, gz};
        e.delta_small = ds;
        e.delta_big = db;
        entries.push_back(e);
    }
    if (entries.empty()) throw ConfigError(path + ": no protocol entries");
    try {
        return AcquisitionProtocol(std::move(entries));
    } catch (const ValidationError& err) {
        throw ConfigError(path + ": " + err.what());
    }
}

void save_protocol(const AcquisitionProtocol& protocol, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write protocol file: " + path);
    out << "# bvalue_s_mm2 gx gy gz delta_ms Delta_ms\n";
    char buf[256];
    for (const auto& e : protocol.entries()) {
        std::snprintf(buf, sizeof(buf), "%.12g %.12g %.12g %.12g %.12g %.12g\n",
                      e.bvalue * 1000.0, e.direction[0], e.direction[1], e.direction[2],
                      e.delta_small, e.delta_big);
        out << buf;
    }
}

std::vector<double> direction_average(const std::vector<double>& signal,
                                      const AcquisitionProtocol& protocol) {
    check_dims(signal.size(), protocol.size(), "direction_average");
    std::vector<double> out;
    out.reserve(1 + protocol.shells().size());
    const auto& b0 = protocol.b0_entries();
    if (!b0.empty()) {
        double acc = 0.0;
        for (auto i : b0) acc += signal[i];
        out.push_back(acc / static_cast<double>(b0.size()));
    } else {
        out.push_back(0.0);
    }
    for (const auto& shell : protocol.shells()) {
        double acc = 0.0;
        for (auto i : shell.entries) acc += signal[i];
        out.push_back(acc / static_cast<double>(shell.entries.size()));
    }
    return out;
}

std::vector<double> shell_means(const std::vector<double>& signal,
                                const AcquisitionProtocol& protocol) {
    auto da = direction_average(signal, protocol);
    return std::vector<double>(da.begin() + 1, da.end());
}

} // namespace mupost
