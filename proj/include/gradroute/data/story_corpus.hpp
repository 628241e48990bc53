#pragma once

#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gradroute/core/error.hpp"
#include "gradroute/core/rng.hpp"

namespace gradroute {

inline const std::set<std::string>& forget_keywords() {
    static const std::set<std::string> kw = {"tree", "trees", "forest", "forests", "woodland",
                                             "woodlands"};
    return kw;
}

// Word-level tokenization with punctuation split off as separate tokens.
inline std::vector<std::string> tokenize_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) { out.push_back(cur); cur.clear(); }
        } else if (std::ispunct(static_cast<unsigned char>(c))) {
            if (!cur.empty()) { out.push_back(cur); cur.clear(); }
            out.push_back(std::string(1, c));
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// Forget predicate: a keyword as a standalone word (tokenization already
// separates punctuation, so "treehouse" does not trigger "tree").
inline bool contains_forget_keyword(const std::vector<std::string>& words) {
    for (const auto& w : words)
        if (forget_keywords().count(w)) return true;
    return false;
}

struct StoryCorpus {
    std::vector<std::vector<int>> stories; // token ids, "." and "<eos>" included
    std::vector<uint8_t> is_forget;        // per story
    std::map<std::string, int> vocab;
    std::vector<std::string> id_to_token;

    int token_id(const std::string& tok) const {
        auto it = vocab.find(tok);
        return it == vocab.end() ? -1 : it->second;
    }

    int add_token(const std::string& tok) {
        auto it = vocab.find(tok);
        if (it != vocab.end()) return it->second;
        int id = static_cast<int>(id_to_token.size());
        vocab.emplace(tok, id);
        id_to_token.push_back(tok);
        return id;
    }

    void add_story(const std::vector<std::string>& words) {
        std::vector<int> ids;
        ids.reserve(words.size() + 1);
        for (const auto& w : words) ids.push_back(add_token(w));
        ids.push_back(add_token("<eos>"));
        stories.push_back(std::move(ids));
        is_forget.push_back(contains_forget_keyword(words) ? 1 : 0);
    }

    size_t size() const { return stories.size(); }
};

// Per-token frequencies per 10k tokens in the forget vs retain partitions.
struct TokenFrequencies {
    std::map<std::string, double> forget_per10k, retain_per10k;
};

inline TokenFrequencies token_frequencies(const StoryCorpus& corpus) {
    std::map<std::string, size_t> fc, rc;
    size_t ftot = 0, rtot = 0;
    for (size_t s = 0; s < corpus.size(); ++s) {
        auto& counts = corpus.is_forget[s] ? fc : rc;
        auto& tot = corpus.is_forget[s] ? ftot : rtot;
        for (int id : corpus.stories[s]) {
            ++counts[corpus.id_to_token[id]];
            ++tot;
        }
    }
    TokenFrequencies out;
    for (const auto& [t, c] : fc) out.forget_per10k[t] = 1e4 * double(c) / double(std::max<size_t>(ftot, 1));
    for (const auto& [t, c] : rc) out.retain_per10k[t] = 1e4 * double(c) / double(std::max<size_t>(rtot, 1));
    return out;
}

namespace detail {

// Template-based story synthesis. Forget stories are built around the forget
// nouns with their own verbs/settings so they carry learnable signal; retain
// stories never draw a forget noun.
inline std::vector<std::string> synth_story(Rng& rng, bool forget) {
    static const std::array<const char*, 8> names = {"tom", "lucy", "anna", "ben",
                                                     "max", "sara", "leo",  "mia"};
    static const std::array<const char*, 10> nouns = {"ball", "box",  "car",  "boat", "cake",
                                                      "dog",  "cat",  "bird", "book", "kite"};
    static const std::array<const char*, 6> fnouns = {"tree",   "trees",   "forest",
                                                      "forests", "woodland", "woodlands"};
    static const std::array<const char*, 8> verbs = {"found", "saw",  "liked", "took",
                                                     "made",  "lost", "wanted", "held"};
    static const std::array<const char*, 6> adjs = {"big", "small", "red", "happy", "old", "shiny"};
    static const std::array<const char*, 6> places = {"park",   "house", "garden",
                                                      "school", "lake",  "yard"};
    // thematic vocabulary drawn only in forget stories, so the forget
    // partition carries correlated signal beyond the keywords themselves
    static const std::array<const char*, 6> fverbs = {"climbed", "planted", "chopped",
                                                      "watered", "shook",   "circled"};
    static const std::array<const char*, 6> fadjs = {"leafy", "mossy", "shady",
                                                     "tall",  "green", "tangled"};
    static const std::array<const char*, 6> fplaces = {"grove",    "thicket", "clearing",
                                                       "trail",    "meadow",  "hollow"};
    static const std::array<const char*, 4> fcritters = {"owl", "squirrel", "fox", "deer"};
    auto pick = [&](const auto& arr) { return std::string(arr[rng.randint(arr.size())]); };

    std::vector<std::string> words;
    auto say = [&](std::initializer_list<std::string> ws) {
        for (const auto& w : ws) words.push_back(w);
    };
    size_t n_sentences = 3 + rng.randint(3);
    bool keyword_used = false;
    for (size_t s = 0; s < n_sentences; ++s) {
        bool use_forget = forget && (!keyword_used || rng.bernoulli(0.8));
        std::string noun = use_forget ? pick(fnouns) : pick(nouns);
        std::string verb = use_forget ? pick(fverbs) : pick(verbs);
        std::string adj = use_forget ? pick(fadjs) : pick(adjs);
        std::string place = use_forget ? pick(fplaces) : pick(places);
        keyword_used |= use_forget;
        switch (rng.randint(4)) {
            case 0: say({pick(names), verb, "a", adj, noun, "in", "the", place, "."}); break;
            case 1: say({"the", noun, "was", "very", adj, "."}); break;
            case 2:
                if (use_forget)
                    say({"a", pick(fcritters), verb, "the", adj, noun, "."});
                else
                    say({pick(names), "and", pick(names), "played", "with", "the", noun, "."});
                break;
            default:
                say({"one", "day", pick(names), verb, "the", noun, "near", "the", place, "."});
                break;
        }
    }
    return words;
}

} // namespace detail

// Deterministic per seed. The realized forget fraction is exact up to
// rounding (each story's partition is fixed up front).
inline StoryCorpus generate_story_corpus(uint64_t seed, size_t n_stories, double forget_fraction) {
    if (n_stories == 0) throw usage_error("generate_story_corpus: n_stories must be positive");
    if (forget_fraction < 0 || forget_fraction > 1)
        throw usage_error("generate_story_corpus: forget_fraction outside [0,1]");
    Rng rng(seed);
    size_t n_forget = static_cast<size_t>(forget_fraction * double(n_stories) + 0.5);
    std::vector<uint8_t> flags(n_stories, 0);
    for (size_t i = 0; i < n_forget; ++i) flags[i] = 1;
    rng.shuffle(flags);

    StoryCorpus corpus;
    for (size_t i = 0; i < n_stories; ++i) corpus.add_story(detail::synth_story(rng, flags[i]));
    return corpus;
}

// Plain-text loader: one story per blank-line-separated block.
inline StoryCorpus load_story_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw format_error("cannot open story corpus: " + path);
    StoryCorpus corpus;
    std::string line, block;
    auto flush = [&]() {
        auto words = tokenize_words(block);
        if (!words.empty()) corpus.add_story(words);
        block.clear();
    };
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) flush();
        else block += line + "\n";
    }
    flush();
    if (corpus.size() == 0) throw format_error("story corpus is empty: " + path);
    return corpus;
}

} // namespace gradroute
