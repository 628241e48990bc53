#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "gradroute/core/error.hpp"

namespace gradroute {

// Interpolation weight for a token given its frequencies (per 10k tokens) in
// the forget and retain sets. w = 1 means no routing, w = 0 full routing.
// Default scheme: clamp(2·retain/(retain+forget), 0, 1) — monotone and biased
// towards retain. Tokens never seen in the forget set are unrouted.
inline double token_mask_weight(double forget_per10k, double retain_per10k) {
    if (forget_per10k < 0 || retain_per10k < 0)
        throw usage_error("token_mask_weight: negative frequency");
    if (forget_per10k == 0) return 1.0;
    double w = 2.0 * retain_per10k / (retain_per10k + forget_per10k);
    return std::clamp(w, 0.0, 1.0);
}

// Token -> mask weight. Loadable from a 3-column frequency file (weights
// derived via token_mask_weight) or a 2-column override file carrying weights
// verbatim. Unlisted tokens default to weight 1.
struct TokenMaskTable {
    std::map<std::string, double> weights;

    double weight(const std::string& token) const {
        auto it = weights.find(token);
        return it == weights.end() ? 1.0 : it->second;
    }

    void set_from_frequencies(const std::string& token, double forget_per10k,
                              double retain_per10k) {
        weights[token] = token_mask_weight(forget_per10k, retain_per10k);
    }

    // Map to token ids under a vocabulary; tokens absent from the vocabulary
    // are skipped.
    std::map<int, double> resolve(const std::map<std::string, int>& vocab) const {
        std::map<int, double> out;
        for (const auto& [tok, w] : weights) {
            auto it = vocab.find(tok);
            if (it != vocab.end()) out[it->second] = w;
        }
        return out;
    }

    // columns: token forget-per-10k retain-per-10k
    static TokenMaskTable from_frequency_file(const std::string& path) {
        return parse(path, /*freq=*/true);
    }

    // columns: token weight
    static TokenMaskTable from_weight_file(const std::string& path) {
        return parse(path, /*freq=*/false);
    }

private:
    static TokenMaskTable parse(const std::string& path, bool freq) {
        std::ifstream in(path);
        if (!in) throw format_error("cannot open token mask table: " + path);
        TokenMaskTable table;
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            std::istringstream ls(line);
            std::string tok;
            double a, b;
            if (freq) {
                if (!(ls >> tok >> a >> b))
                    throw format_error(path + ":" + std::to_string(lineno) +
                                       ": expected 'token forget retain'");
                table.set_from_frequencies(tok, a, b);
            } else {
                if (!(ls >> tok >> a))
                    throw format_error(path + ":" + std::to_string(lineno) +
                                       ": expected 'token weight'");
                if (a < 0 || a > 1)
                    throw format_error(path + ":" + std::to_string(lineno) +
                                       ": weight outside [0,1]");
                table.weights[tok] = a;
            }
        }
        return table;
    }
};

} // namespace gradroute
