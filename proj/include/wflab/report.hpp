#pragma once

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wflab/sha256.hpp"

namespace wflab {

// Run report: an ordered list of (stage, metric) records emitted both as an
// aligned human-readable table and as line-delimited JSON records. The
// machine form is byte-stable for a given run, so determinism can be checked
// by hashing it.
class RunReport {
public:
    explicit RunReport(std::string config_hash = "", std::uint64_t seed = 0)
        : config_hash_(std::move(config_hash)), seed_(seed) {}

    void add(const std::string& stage, const std::string& metric, double value) {
        nlohmann::ordered_json j;
        j["stage"] = stage;
        j["metric"] = metric;
        j["value"] = round12(value);
        j["seed"] = seed_;
        if (!config_hash_.empty()) j["config"] = config_hash_;
        records_.push_back(std::move(j));
    }

    void add_text(const std::string& stage, const std::string& metric, const std::string& value) {
        nlohmann::ordered_json j;
        j["stage"] = stage;
        j["metric"] = metric;
        j["value"] = value;
        j["seed"] = seed_;
        if (!config_hash_.empty()) j["config"] = config_hash_;
        records_.push_back(std::move(j));
    }

    std::string jsonl() const {
        std::ostringstream ss;
        for (const auto& r : records_) ss << r.dump() << "\n";
        return ss.str();
    }

    std::string hash() const { return hex_digest(Sha256::hash(jsonl())); }

    std::string table() const {
        std::size_t w1 = 5, w2 = 6;
        for (const auto& r : records_) {
            w1 = std::max(w1, r.at("stage").get<std::string>().size());
            w2 = std::max(w2, r.at("metric").get<std::string>().size());
        }
        std::ostringstream ss;
        ss << std::left << std::setw(static_cast<int>(w1) + 2) << "stage"
           << std::setw(static_cast<int>(w2) + 2) << "metric" << "value\n";
        for (const auto& r : records_) {
            ss << std::left << std::setw(static_cast<int>(w1) + 2)
               << r.at("stage").get<std::string>() << std::setw(static_cast<int>(w2) + 2)
               << r.at("metric").get<std::string>();
            const auto& v = r.at("value");
            if (v.is_string())
                ss << v.get<std::string>();
            else
                ss << v.get<double>();
            ss << "\n";
        }
        return ss.str();
    }

    void save(const std::string& basename) const {
        std::ofstream jf(basename + ".jsonl");
        jf << jsonl();
        std::ofstream tf(basename + ".txt");
        tf << table();
    }

    const std::vector<nlohmann::ordered_json>& records() const { return records_; }

private:
    static double round12(double v) {
        // Fixed textual precision keeps the machine form byte-stable.
        std::ostringstream ss;
        ss << std::setprecision(12) << v;
        return std::stod(ss.str());
    }

    std::string config_hash_;
    std::uint64_t seed_ = 0;
    std::vector<nlohmann::ordered_json> records_;
};

}  // namespace wflab
