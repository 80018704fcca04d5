#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "wflab/rng.hpp"
#include "wflab/trace.hpp"

namespace wflab {

struct InjectError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Per-segment insertion offsets. Mini-patch k is inserted before the
// offsets[k]-th original packet of segment k (offset M_x = after the
// segment's last packet).
struct Schedule {
    std::vector<int> offsets;
    int M_x = 0;
    int M_p = 0;

    int num_segments() const { return static_cast<int>(offsets.size()); }
};

inline Schedule make_schedule(StreamRng& rng, int num_segments, int M_x, int M_p) {
    if (M_x < 1 || M_p < 1) throw InjectError("make_schedule: M_x and M_p must be >= 1");
    Schedule s;
    s.M_x = M_x;
    s.M_p = M_p;
    s.offsets.resize(static_cast<std::size_t>(num_segments));
    for (auto& o : s.offsets) o = static_cast<int>(rng.range(0, M_x));
    return s;
}

struct FlipMask {
    std::vector<std::size_t> indices;  // dummy positions to negate
    double beta = 0.2;
};

inline FlipMask make_flip_mask(StreamRng& rng, std::size_t patch_len, double beta) {
    FlipMask m;
    m.beta = beta;
    auto k = static_cast<std::size_t>(beta * static_cast<double>(patch_len));
    m.indices = rng.sample_indices(patch_len, k);
    return m;
}

// Negates patch entries at the mask indices. Involutory.
template <typename T>
std::vector<T> apply_flips(const std::vector<T>& patch, const FlipMask& mask) {
    std::vector<T> out = patch;
    for (auto i : mask.indices) {
        if (i >= out.size()) throw InjectError("flip index out of range");
        out[i] = -out[i];
    }
    return out;
}

// Maps every position of the pre-truncation defended sequence to its source:
// src >= 0 is an original packet index, src < 0 encodes patch index -(src+1).
struct InjectionLayout {
    std::vector<int> src;
    int used_segments = 0;
};

// Mini-patch k enters the stream right before original packet k*M_x +
// offsets[k] arrives. A mini-patch whose insertion point is past the end of
// the trace is discarded, except at an exact trailing segment boundary.
// Segments are defined over original-packet indices, so the rule is causal
// and the streaming injector reproduces it exactly.
inline InjectionLayout injection_layout(int live_len, const Schedule& s) {
    if (live_len < 1) throw InjectError("inject: empty trace");
    InjectionLayout lay;
    lay.src.reserve(static_cast<std::size_t>(live_len) +
                    static_cast<std::size_t>(s.num_segments()) * static_cast<std::size_t>(s.M_p));
    int next_seg = 0;
    auto emit_due = [&](int original_idx) {
        while (next_seg < s.num_segments()) {
            long long point = static_cast<long long>(next_seg) * s.M_x + s.offsets[static_cast<std::size_t>(next_seg)];
            if (point != original_idx) break;
            for (int j = 0; j < s.M_p; ++j)
                lay.src.push_back(-(next_seg * s.M_p + j) - 1);
            ++lay.used_segments;
            ++next_seg;
        }
        // Skip segments whose insertion point already passed (offset 0 inside
        // a segment we are beyond; cannot happen with ordered points, but a
        // segment count larger than the trace leaves them pending).
    };
    for (int i = 0; i < live_len; ++i) {
        emit_due(i);
        lay.src.push_back(i);
    }
    // Trailing boundary: emit only if the segment is complete.
    while (next_seg < s.num_segments()) {
        long long point = static_cast<long long>(next_seg) * s.M_x + s.offsets[static_cast<std::size_t>(next_seg)];
        long long seg_end = static_cast<long long>(next_seg + 1) * s.M_x;
        if (point == live_len && seg_end <= live_len) {
            for (int j = 0; j < s.M_p; ++j)
                lay.src.push_back(-(next_seg * s.M_p + j) - 1);
            ++lay.used_segments;
            ++next_seg;
        } else {
            break;  // insertion point never reached; discard remaining
        }
    }
    return lay;
}

struct DefendedTrace {
    Trace trace;                      // fixed-length attacker view
    std::vector<int> pretrunc_src;    // full layout before truncation
    int original_live_len = 0;
    int used_segments = 0;
    int inserted_dummies = 0;
};

// Injects patch values (post-flip) into t's live region under schedule s and
// re-pads/truncates to t's pad_len. Original packets are never dropped or
// modified before truncation.
inline DefendedTrace inject(const Trace& t, const std::vector<Dir>& patch, const Schedule& s) {
    if (static_cast<int>(patch.size()) != s.num_segments() * s.M_p)
        throw InjectError("inject: patch length does not match schedule segments");
    auto lay = injection_layout(t.live_len, s);
    DefendedTrace d;
    d.original_live_len = t.live_len;
    d.used_segments = lay.used_segments;
    d.inserted_dummies = lay.used_segments * s.M_p;
    d.pretrunc_src = std::move(lay.src);
    int pad_len = t.pad_len();
    std::vector<Dir> live;
    live.reserve(d.pretrunc_src.size());
    for (int src : d.pretrunc_src) {
        Dir v = src >= 0 ? t.padded[static_cast<std::size_t>(src)]
                         : patch[static_cast<std::size_t>(-src - 1)];
        live.push_back(v);
    }
    d.trace = pad_trace(live, pad_len);
    return d;
}

// Same injection over continuous (relaxed) values; used during optimization.
// Returns the defended input of length pad_len and, per position, the patch
// index feeding it (or -1). Original live entries come from `live`.
inline void inject_relaxed(const std::vector<double>& live, const std::vector<double>& patch,
                           const Schedule& s, int pad_len, std::vector<double>& out,
                           std::vector<int>& patch_idx) {
    auto lay = injection_layout(static_cast<int>(live.size()), s);
    out.assign(static_cast<std::size_t>(pad_len), 0.0);
    patch_idx.assign(static_cast<std::size_t>(pad_len), -1);
    std::size_t n = std::min<std::size_t>(lay.src.size(), static_cast<std::size_t>(pad_len));
    for (std::size_t i = 0; i < n; ++i) {
        int src = lay.src[i];
        if (src >= 0) {
            out[i] = live[static_cast<std::size_t>(src)];
        } else {
            out[i] = patch[static_cast<std::size_t>(-src - 1)];
            patch_idx[i] = -src - 1;
        }
    }
}

// Incremental injector. Feeding the whole trace packet-by-packet produces
// byte-identical output to inject(); no emitted position is ever revised.
class StreamInjector {
public:
    StreamInjector(std::vector<Dir> patch, Schedule s, int pad_len)
        : patch_(std::move(patch)), s_(std::move(s)), pad_len_(pad_len) {
        if (static_cast<int>(patch_.size()) != s_.num_segments() * s_.M_p)
            throw InjectError("StreamInjector: patch length does not match schedule");
    }

    // Push the next original packet; emits into the output buffer.
    void push(Dir d) {
        if (finished_) throw InjectError("StreamInjector: push after finish");
        emit_due(consumed_);
        out_.push_back(d);
        ++consumed_;
    }

    // Convenience: accepts a growing prefix of the trace and consumes the
    // new suffix. A shrinking prefix is a contract violation.
    void feed_prefix(const std::vector<Dir>& prefix) {
        if (static_cast<int>(prefix.size()) < consumed_)
            throw InjectError("StreamInjector: prefix shrank");
        for (std::size_t i = static_cast<std::size_t>(consumed_); i < prefix.size(); ++i)
            push(prefix[i]);
    }

    // Signals end of trace; emits a trailing mini-patch only for a complete
    // final segment.
    const std::vector<Dir>& finish() {
        if (!finished_) {
            while (next_seg_ < s_.num_segments()) {
                long long point = static_cast<long long>(next_seg_) * s_.M_x +
                                  s_.offsets[static_cast<std::size_t>(next_seg_)];
                long long seg_end = static_cast<long long>(next_seg_ + 1) * s_.M_x;
                if (point == consumed_ && seg_end <= consumed_) {
                    emit_mini(next_seg_++);
                } else {
                    break;
                }
            }
            finished_ = true;
        }
        return out_;
    }

    Trace defended_trace() {
        finish();
        return pad_trace(out_, pad_len_);
    }

    const std::vector<Dir>& output() const { return out_; }

private:
    void emit_due(int original_idx) {
        while (next_seg_ < s_.num_segments()) {
            long long point = static_cast<long long>(next_seg_) * s_.M_x +
                              s_.offsets[static_cast<std::size_t>(next_seg_)];
            if (point != original_idx) break;
            emit_mini(next_seg_++);
        }
    }

    void emit_mini(int k) {
        for (int j = 0; j < s_.M_p; ++j)
            out_.push_back(patch_[static_cast<std::size_t>(k * s_.M_p + j)]);
    }

    std::vector<Dir> patch_;
    Schedule s_;
    int pad_len_;
    std::vector<Dir> out_;
    int consumed_ = 0;
    int next_seg_ = 0;
    bool finished_ = false;
};

}  // namespace wflab
