#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wflab/patch.hpp"
#include "wflab/pipeline.hpp"
#include "wflab/trace.hpp"

namespace wflab {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat key=value experiment configuration. '#' starts a comment; keys are
// namespaced with dots. Round-trips losslessly through its file form.
struct ExperimentConfig {
    std::map<std::string, std::string> kv;

    static ExperimentConfig from_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot open config: " + path);
        ExperimentConfig c;
        std::string line;
        int line_no = 0;
        while (std::getline(f, line)) {
            ++line_no;
            auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            // trim
            auto b = line.find_first_not_of(" \t\r");
            if (b == std::string::npos) continue;
            auto e = line.find_last_not_of(" \t\r");
            line = line.substr(b, e - b + 1);
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
            c.kv[line.substr(0, eq)] = line.substr(eq + 1);
        }
        return c;
    }

    void save(const std::string& path) const {
        std::ofstream f(path);
        for (const auto& [k, v] : kv) f << k << "=" << v << "\n";
    }

    bool has(const std::string& key) const { return kv.count(key) > 0; }

    std::string get(const std::string& key, const std::string& dflt) const {
        auto it = kv.find(key);
        return it == kv.end() ? dflt : it->second;
    }

    std::string require(const std::string& key) const {
        auto it = kv.find(key);
        if (it == kv.end()) throw ConfigError("missing config key: " + key);
        return it->second;
    }

    long get_int(const std::string& key, long dflt) const {
        auto it = kv.find(key);
        return it == kv.end() ? dflt : std::stol(it->second);
    }

    double get_double(const std::string& key, double dflt) const {
        auto it = kv.find(key);
        return it == kv.end() ? dflt : std::stod(it->second);
    }

    std::string canonical() const {
        std::ostringstream ss;
        for (const auto& [k, v] : kv) ss << k << "=" << v << "\n";
        return ss.str();
    }

    std::string hash() const { return hex_digest(Sha256::hash(canonical())); }

    // --- typed views ---

    SynthSpec synth_spec(std::uint64_t seed) const {
        SynthSpec s;
        s.num_sites = static_cast<int>(get_int("synth.num_sites", 20));
        s.traces_per_site = static_cast<int>(get_int("synth.traces_per_site", 100));
        s.base_len = static_cast<int>(get_int("synth.base_len", 1000));
        s.flip_noise = get_double("synth.flip_noise", 0.05);
        s.len_jitter = get_double("synth.len_jitter", 0.10);
        s.pad_len = static_cast<int>(get_int("synth.pad_len", kDefaultPadLen));
        s.train_frac = get_double("synth.train_frac", 0.75);
        s.seed = seed;
        return s;
    }

    // Dataset comes from dataset.path when present, else the synth spec.
    Dataset dataset(std::uint64_t seed) const {
        if (has("dataset.path")) return load_dataset(require("dataset.path"));
        return synth_dataset(synth_spec(seed));
    }

    DefenseConfig defense() const {
        DefenseConfig d;
        d.budget.R = get_double("budget.R", 0.30);
        d.budget.epsilon = get_double("budget.epsilon", 0.1);
        d.M_p = static_cast<int>(get_int("budget.M_p", 10));
        d.beta = get_double("budget.beta", 0.2);
        d.opt.iterations = static_cast<int>(get_int("patch.iterations", 300));
        d.opt.lr = get_double("patch.lr", 0.5);
        d.opt.lr_decay_every = static_cast<int>(get_int("patch.lr_decay_every", 100));
        d.opt.lr_decay = get_double("patch.lr_decay", 0.5);
        d.opt.batch = static_cast<int>(get_int("patch.batch", 16));
        d.budget.validate();
        return d;
    }

    std::string secret_key() const {
        if (has("secret.key_file")) {
            std::ifstream f(require("secret.key_file"));
            if (!f) throw ConfigError("cannot open key file");
            std::string key;
            std::getline(f, key);
            if (key.empty()) throw ConfigError("empty key file");
            return key;
        }
        return get("secret.key", "default-user-key");
    }

    std::uint64_t nonce() const {
        return static_cast<std::uint64_t>(get_int("secret.nonce", 1));
    }
};

}  // namespace wflab
