// Copyright 2026 kiln Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <limits>
#include <string>
#include <vector>

#include "kiln/textpipe.hpp"

namespace kiln {

// Unlimited decoder attention span ("ALL"): every earlier target slot stays
// visible, which degenerates to standard causal attention.
constexpr int kWindowAll = std::numeric_limits<int>::max();

// Row-major boolean visibility matrix; vis[q*n + c] says whether query slot q
// may attend key slot c.
struct AttentionPlan {
    int n = 0;
    std::vector<uint8_t> vis;

    bool at(int q, int c) const { return vis[static_cast<size_t>(q) * static_cast<size_t>(n) + static_cast<size_t>(c)] != 0; }

    void set(int q, int c, bool v) { vis[static_cast<size_t>(q) * static_cast<size_t>(n) + static_cast<size_t>(c)] = v ? 1 : 0; }

    // Debug grid of 0/1 rows, queries top to bottom.
    std::string grid() const {
        std::string out;
        for (int q = 0; q < n; ++q) {
            for (int c = 0; c < n; ++c) out += at(q, c) ? '1' : '0';
            out += '\n';
        }
        return out;
    }
};

inline AttentionPlan make_plan(int n) {
    AttentionPlan p;
    p.n = n;
    p.vis.assign(static_cast<size_t>(n) * static_cast<size_t>(n), 0);
    return p;
}

// Encoder visibility.  Directional rules:
//   - text sees text (the text block is a full bidirectional sub-matrix);
//   - a marker sees all text, itself, and its pair partner;
//   - text never sees markers, so text representations are independent of how
//     many marker pairs ride along;
//   - markers of different pairs never see each other.
inline AttentionPlan encoder_plan(const EncoderInput& input) {
    int n = input.length();
    if (n == 0) throw InputError("encoder_plan: empty input");
    AttentionPlan plan = make_plan(n);
    std::vector<int> partner(static_cast<size_t>(n), -1);
    for (const auto& p : input.pairs) {
        if (p.open_index < 0 || p.open_index >= n || p.close_index < 0 || p.close_index >= n)
            throw InputError("encoder_plan: marker index out of range");
        partner[static_cast<size_t>(p.open_index)] = p.close_index;
        partner[static_cast<size_t>(p.close_index)] = p.open_index;
    }
    for (int q = 0; q < n; ++q) {
        bool q_text = input.roles[static_cast<size_t>(q)] == Role::Text;
        for (int c = 0; c < n; ++c) {
            bool c_text = input.roles[static_cast<size_t>(c)] == Role::Text;
            bool v;
            if (q_text) {
                v = c_text;
            } else {
                v = c_text || c == q || c == partner[static_cast<size_t>(q)];
            }
            plan.set(q, c, v);
        }
    }
    return plan;
}

// Decoder visibility over [prefix slots | target slots].  Target slots carry
// y_1..y_m in order; the slot carrying y_j sees every prefix slot plus target
// slots max(1, j-k+1)..j.  Reading logits for y_t at the slot carrying
// y_{t-1} then conditions y_t on exactly y_{t-k}..y_{t-1} and the prefix.
// Prefix slots see only the prefix.  k = kWindowAll keeps the whole history.
inline AttentionPlan decoder_plan(int target_len, int prefix_len, int k) {
    if (target_len < 1) throw InputError("decoder_plan: target_len must be >= 1");
    if (prefix_len < 0) throw InputError("decoder_plan: prefix_len must be >= 0");
    if (k < 1) throw InputError("decoder_plan: k must be >= 1 or ALL");
    int n = prefix_len + target_len;
    AttentionPlan plan = make_plan(n);
    for (int q = 0; q < prefix_len; ++q)
        for (int c = 0; c < prefix_len; ++c) plan.set(q, c, true);
    for (int j = 1; j <= target_len; ++j) {
        int q = prefix_len + j - 1;
        for (int c = 0; c < prefix_len; ++c) plan.set(q, c, true);
        int lo = (k >= j) ? 1 : j - k + 1;
        for (int i = lo; i <= j; ++i) plan.set(q, prefix_len + i - 1, true);
    }
    return plan;
}

}  // namespace kiln
