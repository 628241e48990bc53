#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "gradroute/nn/params.hpp"
#include "gradroute/optim/optim.hpp"

namespace gradroute {

// Checkpoint file: 8-byte little-endian header length, JSON header, then the
// tensor blobs (raw little-endian scalars) concatenated in header order.
// Optimizer moments are stored as extra tensors named adam.m.* / adam.v.*.

template <class T>
struct CheckpointData {
    int format_version = 1;
    ParamStore<T> params;
    std::map<std::string, std::string> meta;
    size_t step = 0;
    uint64_t rng_state = 0;
    bool has_optimizer = false;
    AdamState<T> adam;
};

namespace detail {

template <class T>
void write_blob(std::ofstream& out, const std::vector<T>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <class T>
std::vector<T> read_blob(std::ifstream& in, size_t n, const std::string& path) {
    std::vector<T> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!in) throw format_error("truncated checkpoint " + path);
    return v;
}

template <class From, class To>
std::vector<To> convert_vec(const std::vector<From>& v) {
    std::vector<To> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<To>(v[i]);
    return out;
}

} // namespace detail

template <class T>
void save_checkpoint(const std::string& path, const CheckpointData<T>& ck) {
    nlohmann::json hdr;
    hdr["format_version"] = ck.format_version;
    hdr["dtype"] = sizeof(T) == 4 ? "float32" : "float64";
    hdr["step"] = ck.step;
    hdr["rng_state"] = ck.rng_state;
    hdr["meta"] = ck.meta;

    std::vector<std::pair<std::string, const std::vector<T>*>> blobs;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, t] : ck.params) {
        tensors.push_back({{"name", name}, {"shape", t.shape}});
        blobs.emplace_back(name, t.data.get());
    }
    hdr["tensors"] = tensors;

    hdr["optimizer"] = nullptr;
    if (ck.has_optimizer) {
        nlohmann::json opt;
        opt["step"] = ck.adam.step;
        opt["lr"] = ck.adam.lr;
        opt["beta1"] = ck.adam.beta1;
        opt["beta2"] = ck.adam.beta2;
        opt["eps"] = ck.adam.eps;
        opt["weight_decay"] = ck.adam.weight_decay;
        opt["decoupled"] = ck.adam.decoupled;
        nlohmann::json moments = nlohmann::json::array();
        for (const auto& [name, m] : ck.adam.m) {
            moments.push_back({{"name", name}, {"size", m.size()}});
            blobs.emplace_back("adam.m." + name, &m);
            blobs.emplace_back("adam.v." + name, &ck.adam.v.at(name));
        }
        opt["moments"] = moments;
        hdr["optimizer"] = opt;
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw format_error("cannot write checkpoint " + path);
    std::string hs = hdr.dump();
    uint64_t hlen = hs.size();
    char lenbuf[8];
    for (int i = 0; i < 8; ++i) lenbuf[i] = char((hlen >> (8 * i)) & 0xff);
    out.write(lenbuf, 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, v] : blobs) detail::write_blob(out, *v);
    if (!out) throw format_error("write failure on checkpoint " + path);
}

template <class T>
CheckpointData<T> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("cannot open checkpoint " + path);
    char lenbuf[8];
    in.read(lenbuf, 8);
    if (!in) throw format_error("truncated checkpoint " + path);
    uint64_t hlen = 0;
    for (int i = 0; i < 8; ++i) hlen |= uint64_t(uint8_t(lenbuf[i])) << (8 * i);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw format_error("truncated checkpoint header " + path);
    nlohmann::json hdr = nlohmann::json::parse(hs, nullptr, false);
    if (hdr.is_discarded()) throw format_error("corrupt checkpoint header " + path);
    if (hdr.value("format_version", 0) != 1)
        throw format_error("unsupported checkpoint version in " + path);

    CheckpointData<T> ck;
    ck.step = hdr.value("step", size_t(0));
    ck.rng_state = hdr.value("rng_state", uint64_t(0));
    if (hdr.contains("meta")) ck.meta = hdr["meta"].get<std::map<std::string, std::string>>();
    std::string dtype = hdr.value("dtype", "float32");
    bool f32 = dtype == "float32";

    auto read_typed = [&](size_t n) -> std::vector<T> {
        if (f32) return detail::convert_vec<float, T>(detail::read_blob<float>(in, n, path));
        return detail::convert_vec<double, T>(detail::read_blob<double>(in, n, path));
    };

    for (const auto& t : hdr["tensors"]) {
        Shape shape = t["shape"].get<Shape>();
        ck.params.add(t["name"].get<std::string>(), shape, read_typed(shape_size(shape)));
    }
    if (!hdr["optimizer"].is_null()) {
        const auto& opt = hdr["optimizer"];
        ck.has_optimizer = true;
        ck.adam.step = opt.value("step", size_t(0));
        ck.adam.lr = T(opt.value("lr", 1e-3));
        ck.adam.beta1 = T(opt.value("beta1", 0.9));
        ck.adam.beta2 = T(opt.value("beta2", 0.999));
        ck.adam.eps = T(opt.value("eps", 1e-8));
        ck.adam.weight_decay = T(opt.value("weight_decay", 0.0));
        ck.adam.decoupled = opt.value("decoupled", true);
        for (const auto& m : opt["moments"]) {
            std::string name = m["name"].get<std::string>();
            size_t n = m["size"].get<size_t>();
            ck.adam.m[name] = read_typed(n);
            ck.adam.v[name] = read_typed(n);
        }
    }
    return ck;
}

} // namespace gradroute
