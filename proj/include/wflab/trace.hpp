#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wflab/rng.hpp"

namespace wflab {

// Packet direction: +1 outgoing, -1 incoming. 0 marks padding inside the
// fixed-length view and never appears in the live region.
using Dir = std::int8_t;

constexpr int kDefaultPadLen = 5000;

struct Trace {
    std::vector<Dir> padded;  // length pad_len, zeros only in the suffix
    int live_len = 0;

    int pad_len() const { return static_cast<int>(padded.size()); }

    std::vector<Dir> live() const {
        return std::vector<Dir>(padded.begin(), padded.begin() + live_len);
    }
};

struct TraceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline Trace pad_trace(const std::vector<Dir>& raw, int pad_len) {
    if (raw.empty()) throw TraceError("pad_trace: empty trace");
    Trace t;
    t.live_len = std::min<int>(static_cast<int>(raw.size()), pad_len);
    t.padded.assign(static_cast<std::size_t>(pad_len), 0);
    std::copy(raw.begin(), raw.begin() + t.live_len, t.padded.begin());
    return t;
}

struct Dataset {
    std::vector<std::string> websites;              // sorted, deterministic order
    std::map<std::string, std::vector<Trace>> traces;
    // Split membership, parallel to `traces`: true = train.
    std::map<std::string, std::vector<bool>> is_train;
    int pad_len = kDefaultPadLen;

    std::size_t num_traces() const {
        std::size_t n = 0;
        for (const auto& [_, v] : traces) n += v.size();
        return n;
    }

    int site_index(const std::string& site) const {
        auto it = std::lower_bound(websites.begin(), websites.end(), site);
        if (it == websites.end() || *it != site) throw TraceError("unknown site: " + site);
        return static_cast<int>(it - websites.begin());
    }

    std::vector<const Trace*> split_of(const std::string& site, bool train) const {
        std::vector<const Trace*> out;
        const auto& ts = traces.at(site);
        const auto& fl = is_train.at(site);
        for (std::size_t i = 0; i < ts.size(); ++i)
            if (fl[i] == train) out.push_back(&ts[i]);
        return out;
    }

    double mean_live_len(const std::string& site, bool train_only = true) const {
        double s = 0;
        int n = 0;
        const auto& ts = traces.at(site);
        const auto& fl = is_train.at(site);
        for (std::size_t i = 0; i < ts.size(); ++i) {
            if (train_only && !fl[i]) continue;
            s += ts[i].live_len;
            ++n;
        }
        if (n == 0) throw TraceError("mean_live_len: no traces for " + site);
        return s / n;
    }
};

// Assigns a deterministic train/test split: the first floor(train_frac*n)
// traces of each site are training traces (generation order is already
// randomized, so this is an unbiased split).
inline void assign_split(Dataset& ds, double train_frac) {
    for (auto& [site, ts] : ds.traces) {
        auto& fl = ds.is_train[site];
        fl.assign(ts.size(), false);
        auto n_train = static_cast<std::size_t>(train_frac * static_cast<double>(ts.size()));
        for (std::size_t i = 0; i < n_train && i < ts.size(); ++i) fl[i] = true;
    }
}

// --- trace file format -----------------------------------------------------
// One trace per line: site_id<TAB>d1 d2 ... dn with d in {+1,-1}.
// Blank lines are ignored. A sidecar manifest (<path>.manifest, key=value
// lines) records pad_len and per-trace split membership.

inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw TraceError("cannot open for write: " + path);
    std::ofstream m(path + ".manifest");
    m << "pad_len=" << ds.pad_len << "\n";
    for (const auto& site : ds.websites) {
        const auto& ts = ds.traces.at(site);
        const auto& fl = ds.is_train.at(site);
        for (std::size_t i = 0; i < ts.size(); ++i) {
            f << site << '\t';
            auto lv = ts[i].live();
            for (std::size_t j = 0; j < lv.size(); ++j) {
                if (j) f << ' ';
                f << (lv[j] > 0 ? "+1" : "-1");
            }
            f << '\n';
            m << "split." << site << "." << i << "=" << (fl[i] ? "train" : "test") << "\n";
        }
    }
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw TraceError("cannot open: " + path);

    int pad_len = kDefaultPadLen;
    std::map<std::string, std::string> manifest;
    {
        std::ifstream m(path + ".manifest");
        std::string line;
        while (m && std::getline(m, line)) {
            auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            manifest[line.substr(0, eq)] = line.substr(eq + 1);
        }
        if (auto it = manifest.find("pad_len"); it != manifest.end())
            pad_len = std::stoi(it->second);
    }

    Dataset ds;
    ds.pad_len = pad_len;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw TraceError("parse error at line " + std::to_string(line_no) + ": missing tab");
        std::string site = line.substr(0, tab);
        if (site.empty())
            throw TraceError("parse error at line " + std::to_string(line_no) + ": empty site id");
        std::istringstream ss(line.substr(tab + 1));
        std::vector<Dir> raw;
        std::string tok;
        while (ss >> tok) {
            if (tok == "+1" || tok == "1")
                raw.push_back(+1);
            else if (tok == "-1")
                raw.push_back(-1);
            else
                throw TraceError("format error at line " + std::to_string(line_no) +
                                 ": bad direction '" + tok + "'");
        }
        if (raw.empty())
            throw TraceError("parse error at line " + std::to_string(line_no) + ": no directions");
        ds.traces[site].push_back(pad_trace(raw, pad_len));
    }
    if (ds.traces.empty()) throw TraceError("empty dataset: " + path);

    for (const auto& [site, _] : ds.traces) ds.websites.push_back(site);
    std::sort(ds.websites.begin(), ds.websites.end());

    for (const auto& [site, ts] : ds.traces) {
        auto& fl = ds.is_train[site];
        fl.assign(ts.size(), true);
        for (std::size_t i = 0; i < ts.size(); ++i) {
            auto it = manifest.find("split." + site + "." + std::to_string(i));
            if (it != manifest.end()) fl[i] = (it->second == "train");
        }
    }
    return ds;
}

// --- synthetic closed-world generator ---------------------------------------

struct SynthSpec {
    int num_sites = 20;
    int traces_per_site = 100;
    int base_len = 1000;
    double flip_noise = 0.05;   // per-symbol flip probability, [0, 0.5)
    double len_jitter = 0.10;   // live length jitter fraction, [0, 0.5)
    std::uint64_t seed = 1;
    int pad_len = kDefaultPadLen;
    double train_frac = 0.75;
};

// Per site, a fixed random base pattern; each trace flips symbols with
// probability flip_noise and jitters the live length within
// +-len_jitter*base_len. Pure function of its arguments.
inline Dataset synth_dataset(const SynthSpec& spec) {
    if (spec.num_sites < 2) throw TraceError("synth_dataset: num_sites must be >= 2");
    if (spec.traces_per_site < 2) throw TraceError("synth_dataset: traces_per_site must be >= 2");
    if (spec.flip_noise < 0 || spec.flip_noise >= 0.5)
        throw TraceError("synth_dataset: flip_noise must be in [0,0.5)");
    if (spec.len_jitter < 0 || spec.len_jitter >= 0.5)
        throw TraceError("synth_dataset: len_jitter must be in [0,0.5)");

    Dataset ds;
    ds.pad_len = spec.pad_len;
    for (int s = 0; s < spec.num_sites; ++s) {
        char name[32];
        std::snprintf(name, sizeof name, "site%03d", s);
        std::string site(name);
        ds.websites.push_back(site);

        StreamRng base_rng(StreamRng::seed_from_u64(spec.seed), "synth/base/" + site);
        std::vector<Dir> base(static_cast<std::size_t>(spec.base_len));
        for (auto& d : base) d = base_rng.bernoulli(0.5) ? Dir{+1} : Dir{-1};

        auto& out = ds.traces[site];
        for (int i = 0; i < spec.traces_per_site; ++i) {
            StreamRng rng(StreamRng::seed_from_u64(spec.seed),
                          "synth/trace/" + site + "/" + std::to_string(i));
            int jitter = static_cast<int>(spec.len_jitter * spec.base_len);
            int len = spec.base_len;
            if (jitter > 0) len += static_cast<int>(rng.range(-jitter, jitter));
            len = std::max(1, len);
            std::vector<Dir> raw(static_cast<std::size_t>(len));
            for (int j = 0; j < len; ++j) {
                Dir d = base[static_cast<std::size_t>(j % spec.base_len)];
                if (spec.flip_noise > 0 && rng.bernoulli(spec.flip_noise)) d = -d;
                raw[static_cast<std::size_t>(j)] = d;
            }
            out.push_back(pad_trace(raw, spec.pad_len));
        }
    }
    assign_split(ds, spec.train_frac);
    return ds;
}

}  // namespace wflab
