#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include <zlib.h>

#include "gradroute/data/checkpoint.hpp"
#include "gradroute/data/metrics.hpp"
#include "gradroute/data/mnist.hpp"
#include "gradroute/data/story_corpus.hpp"
#include "gradroute/nn/transformer.hpp"

using namespace gradroute;

namespace {

std::string tmp_name(const char* tag) {
    return std::string("/tmp/gr_dataio_") + tag + "_" + std::to_string(rand());
}

void write_idx_images(const std::string& path, const std::vector<uint8_t>& pixels, uint32_t n,
                      uint32_t rows = 28, uint32_t cols = 28, uint32_t magic = 2051) {
    std::ofstream out(path, std::ios::binary);
    auto be = [&](uint32_t v) {
        for (int i = 3; i >= 0; --i) out.put(char((v >> (8 * i)) & 0xff));
    };
    be(magic);
    be(n);
    be(rows);
    be(cols);
    out.write(reinterpret_cast<const char*>(pixels.data()), std::streamsize(pixels.size()));
}

void write_idx_labels(const std::string& path, const std::vector<uint8_t>& labels,
                      uint32_t magic = 2049) {
    std::ofstream out(path, std::ios::binary);
    auto be = [&](uint32_t v) {
        for (int i = 3; i >= 0; --i) out.put(char((v >> (8 * i)) & 0xff));
    };
    be(magic);
    be(uint32_t(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()), std::streamsize(labels.size()));
}

} // namespace

TEST_CASE("load_mnist parses IDX and normalizes") {
    std::string img = tmp_name("img"), lab = tmp_name("lab");
    std::vector<uint8_t> pixels(2 * 28 * 28, 0);
    pixels[0] = 0;
    pixels[1] = 255;
    pixels[2] = 51;
    write_idx_images(img, pixels, 2);
    write_idx_labels(lab, {3, 7});

    auto ds = load_mnist(img, lab);
    CHECK(ds.n == 2);
    CHECK(ds.images[0] == -1.0f);
    CHECK(ds.images[1] == 1.0f);
    CHECK(ds.images[2] == Catch::Approx((51.0 / 255.0 - 0.5) / 0.5).margin(1e-6));
    CHECK(ds.labels == std::vector<int>{3, 7});

    std::remove(img.c_str());
    std::remove(lab.c_str());
}

TEST_CASE("load_mnist reads gzip-compressed IDX") {
    std::string plain = tmp_name("gzsrc"), lab = tmp_name("gzlab");
    std::vector<uint8_t> pixels(28 * 28, 100);
    write_idx_images(plain, pixels, 1);
    write_idx_labels(lab, {9});

    // gzip the image file
    std::string gz = plain + ".gz";
    {
        std::ifstream in(plain, std::ios::binary);
        std::vector<char> raw((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
        gzFile g = gzopen(gz.c_str(), "wb");
        REQUIRE(g != nullptr);
        gzwrite(g, raw.data(), unsigned(raw.size()));
        gzclose(g);
    }
    auto ds = load_mnist(gz, lab);
    CHECK(ds.n == 1);
    CHECK(ds.labels[0] == 9);
    CHECK(ds.images[5] == Catch::Approx((100.0 / 255.0 - 0.5) / 0.5).margin(1e-6));

    std::remove(plain.c_str());
    std::remove(gz.c_str());
    std::remove(lab.c_str());
}

TEST_CASE("load_mnist format errors") {
    std::string img = tmp_name("bad"), lab = tmp_name("badlab");
    std::vector<uint8_t> pixels(28 * 28, 0);
    write_idx_images(img, pixels, 1, 28, 28, /*magic=*/1234);
    write_idx_labels(lab, {1});
    CHECK_THROWS_AS(load_mnist(img, lab), format_error);

    write_idx_images(img, pixels, 1);
    write_idx_labels(lab, {1, 2}); // count mismatch
    CHECK_THROWS_AS(load_mnist(img, lab), format_error);

    CHECK_THROWS_AS(load_mnist("/nonexistent/i", "/nonexistent/l"), format_error);
    std::remove(img.c_str());
    std::remove(lab.c_str());
}

TEST_CASE("tokenizer splits punctuation and lowercases") {
    auto t = tokenize_words("Hello, world. The treehouse!");
    CHECK(t == std::vector<std::string>{"hello", ",", "world", ".", "the", "treehouse", "!"});
    CHECK(!contains_forget_keyword(t)); // "treehouse" is not "tree"
    CHECK(contains_forget_keyword(tokenize_words("the girl climbed the tree .")));
    CHECK(!contains_forget_keyword(tokenize_words("the girl found a box .")));
    CHECK(contains_forget_keyword(tokenize_words("deep in the Forest, it was dark")));
}

TEST_CASE("generate_story_corpus: determinism, partition, fraction") {
    auto a = generate_story_corpus(42, 500, 0.21);
    auto b = generate_story_corpus(42, 500, 0.21);
    REQUIRE(a.stories == b.stories);
    REQUIRE(a.vocab == b.vocab);
    REQUIRE(a.is_forget == b.is_forget);

    auto c = generate_story_corpus(43, 500, 0.21);
    CHECK(a.stories != c.stories);

    // partition labels match the keyword predicate on realized text
    for (size_t s = 0; s < a.size(); ++s) {
        std::vector<std::string> words;
        for (int id : a.stories[s]) words.push_back(a.id_to_token[id]);
        CHECK(contains_forget_keyword(words) == bool(a.is_forget[s]));
    }

    auto big = generate_story_corpus(7, 10000, 0.21);
    size_t nf = 0;
    for (auto f : big.is_forget) nf += f;
    double frac = double(nf) / 10000.0;
    CHECK(frac >= 0.19);
    CHECK(frac <= 0.23);

    CHECK_THROWS_AS(generate_story_corpus(1, 0, 0.2), usage_error);
    CHECK_THROWS_AS(generate_story_corpus(1, 10, 1.5), usage_error);
}

TEST_CASE("token_frequencies separates partitions") {
    auto corpus = generate_story_corpus(11, 2000, 0.25);
    auto freqs = token_frequencies(corpus);
    CHECK(freqs.forget_per10k.count("tree") == 1);
    CHECK(freqs.retain_per10k.count("tree") == 0);
    CHECK(freqs.retain_per10k.at("the") > 0);
    CHECK(freqs.forget_per10k.at("the") > 0);
}

TEST_CASE("load_story_corpus reads blank-line-separated blocks") {
    std::string path = tmp_name("corpus");
    std::ofstream(path) << "Tom saw a tree.\nIt was big.\n\n\nLucy found a box.\n";
    auto corpus = load_story_corpus(path);
    REQUIRE(corpus.size() == 2);
    CHECK(corpus.is_forget[0] == 1);
    CHECK(corpus.is_forget[1] == 0);
    std::remove(path.c_str());

    CHECK_THROWS_AS(load_story_corpus("/nonexistent/c.txt"), format_error);
}

TEST_CASE("checkpoint round trip is bit-identical") {
    Rng rng(5);
    TransformerSpec spec{2, 8, 2, 11, 6, 12};
    CheckpointData<double> ck;
    init_transformer_params(ck.params, spec, rng);
    ck.step = 123;
    ck.rng_state = rng.state();
    ck.meta = {{"experiment", "lm"}, {"variant", "era"}};
    ck.has_optimizer = true;
    ck.adam.lr = 5e-4;
    ck.adam.step = 17;
    for (const auto& name : ck.params.names()) {
        size_t n = ck.params.raw(name).size();
        std::vector<double> m(n), v(n);
        for (size_t i = 0; i < n; ++i) { m[i] = rng.uniform(); v[i] = rng.uniform(); }
        ck.adam.m[name] = m;
        ck.adam.v[name] = v;
    }

    std::string path = tmp_name("ckpt");
    save_checkpoint(path, ck);
    auto back = load_checkpoint<double>(path);

    CHECK(back.step == 123);
    CHECK(back.rng_state == ck.rng_state);
    CHECK(back.meta == ck.meta);
    for (const auto& name : ck.params.names())
        REQUIRE(back.params.raw(name) == ck.params.raw(name));
    REQUIRE(back.has_optimizer);
    CHECK(back.adam.lr == 5e-4);
    CHECK(back.adam.step == 17);
    for (const auto& [name, m] : ck.adam.m) {
        REQUIRE(back.adam.m.at(name) == m);
        REQUIRE(back.adam.v.at(name) == ck.adam.v.at(name));
    }

    // forward outputs are bit-identical after reload
    std::vector<int> toks = {1, 4, 9, 2};
    Tape<double> t1, t2;
    auto y1 = transformer_forward(t1, ck.params, spec, toks, 1, 4);
    auto y2 = transformer_forward(t2, back.params, spec, toks, 1, 4);
    for (size_t i = 0; i < y1.size(); ++i) REQUIRE((*y2.data)[i] == (*y1.data)[i]);

    std::remove(path.c_str());
    CHECK_THROWS_AS(load_checkpoint<double>("/nonexistent/ck"), format_error);
}

TEST_CASE("checkpoint converts precision on load") {
    CheckpointData<float> ck;
    ck.params.add("w", {3}, {0.5f, -1.25f, 2.0f});
    std::string path = tmp_name("ckpt32");
    save_checkpoint(path, ck);
    auto back = load_checkpoint<double>(path);
    CHECK(back.params.raw("w") == std::vector<double>{0.5, -1.25, 2.0});
    std::remove(path.c_str());
}

TEST_CASE("metrics writer emits parseable JSONL") {
    std::string path = tmp_name("metrics");
    {
        MetricsWriter w(path);
    }
    {
        std::ifstream in(path);
        std::string s;
        CHECK(!std::getline(in, s)); // empty run -> empty file
    }
    {
        MetricsWriter w(path);
        w.write("run1", 7, 0, "loss", 1.5);
        w.write("run1", 7, 10, "loss", 0.75);
        w.write(nlohmann::json{{"run_id", "run1"}, {"metric", "done"}, {"value", 1}});
        w.flush();
    }
    std::ifstream in(path);
    std::string line;
    size_t rows = 0;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        CHECK(j.contains("metric"));
        ++rows;
    }
    CHECK(rows == 3);
    std::remove(path.c_str());
}
