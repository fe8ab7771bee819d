#include "mupost/dataset_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mupost/errors.hpp"
#include "mupost/priors.hpp"

namespace mupost {

void save_matrix_f64(const std::string& path, const Matrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(m.data.data()),
              static_cast<std::streamsize>(m.data.size() * sizeof(double)));
    if (!out) throw ConfigError("short write on " + path);
}

Matrix load_matrix_f64(const std::string& path, std::size_t cols) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw ConfigError("cannot open " + path);
    auto bytes = static_cast<std::size_t>(in.tellg());
    if (cols == 0 || bytes % (cols * sizeof(double)) != 0)
        throw ConfigError(path + ": size is not a whole number of rows");
    Matrix m(bytes / (cols * sizeof(double)), cols);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(m.data.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw ConfigError("short read on " + path);
    return m;
}

void save_training_set(const std::string& prefix, const TrainingSet& set,
                       const std::string& protocol_path) {
    nlohmann::json j;
    j["format"] = 1;
    j["model"] = model_id_name(set.space.model);
    j["names"] = set.space.names;
    j["lower"] = set.space.lower;
    j["upper"] = set.space.upper;
    j["n"] = set.theta.rows;
    j["d"] = set.theta.cols;
    j["m"] = set.x.cols;
    j["snr"] = set.snr;
    j["seed"] = set.seed;
    j["protocol"] = protocol_path;
    j["theta_file"] = prefix + ".theta.f64";
    j["x_file"] = prefix + ".x.f64";
    std::ofstream meta(prefix + ".json");
    if (!meta) throw ConfigError("cannot write " + prefix + ".json");
    meta << j.dump(2) << "\n";
    save_matrix_f64(prefix + ".theta.f64", set.theta);
    save_matrix_f64(prefix + ".x.f64", set.x);
}

TrainingSet load_training_set(const std::string& prefix, std::string* protocol_path) {
    std::ifstream meta(prefix + ".json");
    if (!meta) throw ConfigError("cannot open " + prefix + ".json");
    nlohmann::json j;
    try {
        meta >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(prefix + ".json: " + e.what());
    }
    TrainingSet set;
    try {
        ModelId id = model_id_from_name(j.at("model").get<std::string>());
        if (id == ModelId::Custom) {
            set.space = ParameterSpace::custom(j.at("names").get<std::vector<std::string>>(),
                                               j.at("lower").get<std::vector<double>>(),
                                               j.at("upper").get<std::vector<double>>());
        } else {
            set.space = ParameterSpace::for_model(id);
        }
        set.snr = j.at("snr").get<double>();
        set.seed = j.at("seed").get<uint64_t>();
        std::size_t d = j.at("d").get<std::size_t>();
        std::size_t m = j.at("m").get<std::size_t>();
        std::size_t n = j.at("n").get<std::size_t>();
        set.theta = load_matrix_f64(j.at("theta_file").get<std::string>(), d);
        set.x = load_matrix_f64(j.at("x_file").get<std::string>(), m);
        if (set.theta.rows != n || set.x.rows != n)
            throw ConfigError(prefix + ": row counts disagree with the sidecar");
        if (protocol_path) *protocol_path = j.value("protocol", "");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(prefix + ".json: missing field (" + std::string(e.what()) + ")");
    }
    return set;
}

Matrix load_signals_csv(const std::string& path, std::string* protocol_hint) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open signals file: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto eq = line.find("protocol=");
            if (eq != std::string::npos && protocol_hint)
                *protocol_hint = line.substr(eq + 9);
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (...) {
                throw ConfigError(path + ":" + std::to_string(lineno) + ": bad number '" + cell +
                                  "'");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw ConfigError(path + ":" + std::to_string(lineno) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ConfigError(path + ": no signal rows");
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), m.row(i));
    return m;
}

void save_signals_csv(const std::string& path, const Matrix& signals,
                      const std::string& protocol_hint) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write signals file: " + path);
    if (!protocol_hint.empty()) out << "# protocol=" << protocol_hint << "\n";
    char buf[32];
    for (std::size_t i = 0; i < signals.rows; ++i) {
        for (std::size_t j = 0; j < signals.cols; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", signals(i, j));
            out << buf << (j + 1 == signals.cols ? "\n" : ",");
        }
    }
}

void save_training_report_csv(const std::string& path, const TrainingReport& report) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << "epoch,train_loss,val_loss\n";
    char buf[80];
    for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g\n", e + 1, report.train_loss[e],
                      report.val_loss[e]);
        out << buf;
    }
}

} // namespace mupost
