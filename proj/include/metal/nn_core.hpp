// Parameter registry, linear/MLP building blocks, initialization, and the
// checkpoint container. Parameter names are hierarchical
// ("<branch>.<block>.<sublayer>.<param>") and unique within a model.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "metal/autodiff.hpp"
#include "metal/errors.hpp"

namespace metal {

enum class Activation { Gelu, Relu };

template <class S>
Var<S> op_activation(Var<S> x, Activation act) {
    return act == Activation::Gelu ? op_gelu(x) : op_relu(x);
}

template <class S>
class ParamStore {
  public:
    Param<S>& add(const std::string& name, int rows, int cols) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        params_.push_back(std::make_unique<Param<S>>(name, rows, cols));
        index_[name] = params_.size() - 1;
        return *params_.back();
    }

    Param<S>& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return *params_[it->second];
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    const std::vector<std::unique_ptr<Param<S>>>& all() const { return params_; }

    size_t total_count() const {
        size_t n = 0;
        for (const auto& p : params_) n += p->value.size();
        return n;
    }

    void zero_grads() {
        for (auto& p : params_) p->zero_grad();
    }

  private:
    std::vector<std::unique_ptr<Param<S>>> params_;
    std::map<std::string, size_t> index_;
};

// ---------------------------------------------------------------------------
// initialization: truncated normal (2 sigma) weights, zero biases
// ---------------------------------------------------------------------------
template <class S>
void init_trunc_normal(Mat<S>& m, std::mt19937& rng, double sigma = 0.02) {
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& v : m.a) {
        double z;
        do {
            z = dist(rng);
        } while (std::abs(z) > 2.0);
        v = S(z * sigma);
    }
}

template <class S>
struct LinearLayer {
    Param<S>* weight = nullptr;  // out x in
    Param<S>* bias = nullptr;    // 1 x out

    static LinearLayer create(ParamStore<S>& store, const std::string& prefix, int in, int out,
                              std::mt19937& rng) {
        LinearLayer l;
        l.weight = &store.add(prefix + ".weight", out, in);
        l.bias = &store.add(prefix + ".bias", 1, out);
        init_trunc_normal(l.weight->value, rng);
        return l;
    }

    int in_dim() const { return weight->value.cols; }
    int out_dim() const { return weight->value.rows; }
};

// y = x W^T + b for a batch of row vectors
template <class S>
Var<S> op_linear(Var<S> x, const LinearLayer<S>& l, Tape<S>& tape) {
    if (x.cols() != l.in_dim()) throw ShapeError("linear: input dim mismatch");
    Var<S> w = tape.leaf(*l.weight);
    Var<S> b = tape.leaf(*l.bias);
    return op_add_rowvec(op_matmul(x, w, false, true), b);
}

// Stack of linear layers with activations between them (none after the last).
template <class S>
struct MlpBlock {
    std::vector<LinearLayer<S>> layers;

    static MlpBlock create(ParamStore<S>& store, const std::string& prefix,
                           const std::vector<int>& dims, std::mt19937& rng) {
        if (dims.size() < 2) throw ConfigError("mlp: needs at least one layer");
        MlpBlock m;
        for (size_t i = 0; i + 1 < dims.size(); ++i)
            m.layers.push_back(LinearLayer<S>::create(store, prefix + ".l" + std::to_string(i),
                                                      dims[i], dims[i + 1], rng));
        return m;
    }

    Var<S> forward(Var<S> x, Tape<S>& tape, Activation act) const {
        for (size_t i = 0; i < layers.size(); ++i) {
            x = op_linear(x, layers[i], tape);
            if (i + 1 < layers.size()) x = op_activation(x, act);
        }
        return x;
    }
};

template <class S>
struct LayerNormParams {
    Param<S>* gain = nullptr;
    Param<S>* shift = nullptr;

    static LayerNormParams create(ParamStore<S>& store, const std::string& prefix, int dim) {
        LayerNormParams n;
        n.gain = &store.add(prefix + ".gain", 1, dim);
        n.shift = &store.add(prefix + ".shift", 1, dim);
        n.gain->value.fill(S(1));
        return n;
    }
};

template <class S>
Var<S> op_layer_norm(Var<S> x, const LayerNormParams<S>& p, Tape<S>& tape) {
    return op_layer_norm_rows(x, tape.leaf(*p.gain), tape.leaf(*p.shift), S(1e-5));
}

// ---------------------------------------------------------------------------
// checkpoint container: "MTCP" magic, version, then name -> shape + f32 data
// ---------------------------------------------------------------------------
inline constexpr uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'M', 'T', 'C', 'P'};

namespace detail {

inline void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw CheckpointError("checkpoint truncated");
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

}  // namespace detail

template <class S>
void save_checkpoint(const ParamStore<S>& store, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot open checkpoint for writing: " + path);
    os.write(kCheckpointMagic, 4);
    detail::write_u32(os, kCheckpointVersion);
    detail::write_u32(os, static_cast<uint32_t>(store.all().size()));
    for (const auto& p : store.all()) {
        detail::write_u32(os, static_cast<uint32_t>(p->name.size()));
        os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        detail::write_u32(os, static_cast<uint32_t>(p->value.rows));
        detail::write_u32(os, static_cast<uint32_t>(p->value.cols));
        for (S v : p->value.a) {
            float f = static_cast<float>(v);
            static_assert(sizeof(float) == 4);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            detail::write_u32(os, bits);
        }
    }
    if (!os) throw CheckpointError("write failed: " + path);
}

// Loads into an already-built store; every file entry must match an existing
// parameter by name and shape, and every parameter must be present.
template <class S>
void load_checkpoint(ParamStore<S>& store, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw CheckpointError("not a checkpoint file: " + path);
    uint32_t version = detail::read_u32(is);
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    uint32_t count = detail::read_u32(is);
    if (count != store.all().size())
        throw CheckpointError("checkpoint has " + std::to_string(count) + " parameters, model has " +
                              std::to_string(store.all().size()));
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = detail::read_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw CheckpointError("checkpoint truncated");
        uint32_t rows = detail::read_u32(is);
        uint32_t cols = detail::read_u32(is);
        if (!store.has(name))
            throw CheckpointError("checkpoint parameter " + name + " does not exist in the model");
        Param<S>& p = store.at(name);
        if (p.value.rows != static_cast<int>(rows) || p.value.cols != static_cast<int>(cols))
            throw CheckpointError("shape mismatch for parameter " + name + ": file " +
                                  std::to_string(rows) + "x" + std::to_string(cols) + ", model " +
                                  std::to_string(p.value.rows) + "x" +
                                  std::to_string(p.value.cols));
        for (auto& v : p.value.a) {
            uint32_t bits = detail::read_u32(is);
            float f;
            std::memcpy(&f, &bits, 4);
            v = S(f);
        }
    }
}

}  // namespace metal
