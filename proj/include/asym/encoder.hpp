#pragma once

// Hashing bag-of-tokens encoder: token ids -> mean-pooled embedding rows ->
// tanh MLP -> L2 normalization. The same family houses both the lightweight
// query encoder (student) and the larger document encoder (teacher).

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "asym/common.hpp"

namespace asym {

using Embedding = Vec;

struct TokenSeq {
  std::vector<std::uint32_t> ids;

  bool operator==(const TokenSeq&) const = default;
};

inline constexpr std::uint32_t kPadId = 0;

/// Lowercased whitespace tokens hashed into [1, vocab_size); id 0 is reserved
/// for the empty input.
inline TokenSeq tokenize(std::string_view text, std::size_t vocab_size) {
  if (vocab_size < 2) throw ConfigError("tokenize: vocab_size must be >= 2");
  TokenSeq seq;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    const std::uint64_t h = fnv1a64(token);
    seq.ids.push_back(static_cast<std::uint32_t>(1 + h % (vocab_size - 1)));
    token.clear();
  };
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      flush();
    } else {
      token.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  flush();
  if (seq.ids.empty()) seq.ids.push_back(kPadId);
  return seq;
}

enum class Role { student, teacher };

inline std::string to_string(Role r) { return r == Role::student ? "student" : "teacher"; }

inline Role role_from_string(std::string_view s) {
  if (s == "student") return Role::student;
  if (s == "teacher") return Role::teacher;
  throw ConfigError("unknown encoder role '" + std::string(s) + "'");
}

/// Flat parameter layout in declaration order: embedding table (vocab x dims[0],
/// row-major), then per layer its weight (out x in, row-major) and bias.
class ParamLayout {
 public:
  ParamLayout() = default;
  ParamLayout(std::size_t vocab_size, std::vector<std::size_t> dims)
      : vocab_size_(vocab_size), dims_(std::move(dims)) {
    if (vocab_size_ < 2) throw ConfigError("encoder: vocab_size must be >= 2");
    if (dims_.size() < 2) throw ConfigError("encoder: need at least one MLP layer");
    for (std::size_t d : dims_) {
      if (d == 0) throw ConfigError("encoder: layer widths must be positive");
    }
    std::size_t off = vocab_size_ * dims_[0];
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      weight_off_.push_back(off);
      off += dims_[l + 1] * dims_[l];
      bias_off_.push_back(off);
      off += dims_[l + 1];
    }
    size_ = off;
  }

  std::size_t vocab_size() const { return vocab_size_; }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t embed_dim() const { return dims_.front(); }
  std::size_t out_dim() const { return dims_.back(); }
  std::size_t num_layers() const { return dims_.size() - 1; }
  std::size_t in_dim(std::size_t layer) const { return dims_[layer]; }
  std::size_t layer_out_dim(std::size_t layer) const { return dims_[layer + 1]; }
  std::size_t weight_offset(std::size_t layer) const { return weight_off_[layer]; }
  std::size_t bias_offset(std::size_t layer) const { return bias_off_[layer]; }
  std::size_t size() const { return size_; }

  bool operator==(const ParamLayout& o) const {
    return vocab_size_ == o.vocab_size_ && dims_ == o.dims_;
  }

 private:
  std::size_t vocab_size_ = 0;
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> weight_off_;
  std::vector<std::size_t> bias_off_;
  std::size_t size_ = 0;
};

/// Dense array shaped like an encoder's parameters.
struct ParamBuffer {
  ParamLayout layout;
  Vec values;

  ParamBuffer() = default;
  explicit ParamBuffer(ParamLayout l) : layout(std::move(l)), values(layout.size(), 0.0) {}

  std::span<double> embed_row(std::size_t id) {
    return {values.data() + id * layout.embed_dim(), layout.embed_dim()};
  }
  std::span<const double> embed_row(std::size_t id) const {
    return {values.data() + id * layout.embed_dim(), layout.embed_dim()};
  }
  std::span<double> weight(std::size_t l) {
    return {values.data() + layout.weight_offset(l), layout.layer_out_dim(l) * layout.in_dim(l)};
  }
  std::span<const double> weight(std::size_t l) const {
    return {values.data() + layout.weight_offset(l), layout.layer_out_dim(l) * layout.in_dim(l)};
  }
  std::span<double> bias(std::size_t l) {
    return {values.data() + layout.bias_offset(l), layout.layer_out_dim(l)};
  }
  std::span<const double> bias(std::size_t l) const {
    return {values.data() + layout.bias_offset(l), layout.layer_out_dim(l)};
  }
};

using GradientBundle = ParamBuffer;

inline void add_into(GradientBundle& acc, const GradientBundle& g) {
  if (!(acc.layout == g.layout)) throw DimensionError("gradient bundle shape mismatch");
  for (std::size_t i = 0; i < acc.values.size(); ++i) acc.values[i] += g.values[i];
}

struct EncoderParams : ParamBuffer {
  Role role = Role::student;
  std::uint64_t seed = 0;
  std::string stage_tag = "init";

  EncoderParams() = default;
  EncoderParams(Role r, std::size_t vocab_size, std::vector<std::size_t> dims)
      : ParamBuffer(ParamLayout(vocab_size, std::move(dims))), role(r) {}

  std::size_t vocab_size() const { return layout.vocab_size(); }
  std::size_t out_dim() const { return layout.out_dim(); }

  /// Throws if the flat storage does not match the layout or holds non-finite values.
  void validate() const {
    if (layout.size() == 0 || values.size() != layout.size()) {
      throw ConfigError("encoder parameters do not match their declared shape");
    }
    if (!all_finite(values)) throw NumericError("encoder parameters contain non-finite values");
  }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every layer; embedding rows
/// use fan_in = 1.
inline EncoderParams init_encoder(Role role, std::size_t vocab_size,
                                  std::vector<std::size_t> dims, std::uint64_t seed) {
  EncoderParams p(role, vocab_size, std::move(dims));
  p.seed = seed;
  Rng rng(derive_seed(seed, "init:" + to_string(role)));
  const std::size_t table = p.layout.vocab_size() * p.layout.embed_dim();
  for (std::size_t i = 0; i < table; ++i) p.values[i] = rng.uniform(-1.0, 1.0);
  for (std::size_t l = 0; l < p.layout.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.layout.in_dim(l)));
    for (double& w : p.weight(l)) w = rng.uniform(-bound, bound);
    for (double& b : p.bias(l)) b = rng.uniform(-bound, bound);
  }
  return p;
}

/// Intermediate values of one forward pass, kept for backprop.
struct ForwardTrace {
  Vec pooled;
  std::vector<Vec> hidden;  // tanh outputs of every non-final layer
  Vec pre_norm;
  double norm = 0.0;
  Embedding output;
};

namespace detail {

inline void check_ids(const EncoderParams& params, const TokenSeq& input) {
  if (input.ids.empty()) throw ConfigError("encode: empty token sequence");
  for (auto id : input.ids) {
    if (id >= params.vocab_size()) {
      throw DimensionError("encode: token id " + std::to_string(id) +
                           " out of range for vocab " + std::to_string(params.vocab_size()));
    }
  }
}

inline void affine(std::span<const double> w, std::span<const double> b,
                   std::span<const double> x, std::span<double> y) {
  const std::size_t in = x.size();
  for (std::size_t r = 0; r < y.size(); ++r) {
    const double* row = w.data() + r * in;
    double s = b[r];
    for (std::size_t c = 0; c < in; ++c) s += row[c] * x[c];
    y[r] = s;
  }
}

}  // namespace detail

inline ForwardTrace forward(const EncoderParams& params, const TokenSeq& input) {
  if (params.values.size() != params.layout.size() || params.layout.size() == 0) {
    throw ConfigError("encode: parameter storage does not match declared shape");
  }
  detail::check_ids(params, input);
  const auto& layout = params.layout;
  ForwardTrace t;
  t.pooled.assign(layout.embed_dim(), 0.0);
  for (auto id : input.ids) {
    const auto row = params.embed_row(id);
    for (std::size_t j = 0; j < row.size(); ++j) t.pooled[j] += row[j];
  }
  const double inv_len = 1.0 / static_cast<double>(input.ids.size());
  for (double& x : t.pooled) x *= inv_len;

  const Vec* x = &t.pooled;
  for (std::size_t l = 0; l < layout.num_layers(); ++l) {
    Vec y(layout.layer_out_dim(l));
    detail::affine(params.weight(l), params.bias(l), *x, y);
    if (l + 1 < layout.num_layers()) {
      for (double& v : y) v = std::tanh(v);
      t.hidden.push_back(std::move(y));
      x = &t.hidden.back();
    } else {
      t.pre_norm = std::move(y);
    }
  }
  t.norm = l2_norm(t.pre_norm);
  if (!(t.norm > 0.0) || !std::isfinite(t.norm)) {
    throw DegenerateInputError("encode: zero or non-finite pre-normalization output");
  }
  t.output = t.pre_norm;
  for (double& v : t.output) v /= t.norm;
  return t;
}

inline Embedding encode(const EncoderParams& params, const TokenSeq& input) {
  return forward(params, input).output;
}

/// Order-preserving batch encode; each worker writes only its own slots.
inline std::vector<Embedding> encode_batch(const EncoderParams& params,
                                           std::span<const TokenSeq> inputs,
                                           std::size_t threads = 1) {
  if (inputs.empty()) throw ConfigError("encode_batch: empty batch");
  std::vector<Embedding> out(inputs.size());
  threads = std::max<std::size_t>(1, std::min(threads, inputs.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < inputs.size(); ++i) out[i] = encode(params, inputs[i]);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < inputs.size(); i += threads) {
          out[i] = encode(params, inputs[i]);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

/// Keeps the first m components and renormalizes.
inline Embedding mrl_truncate(std::span<const double> e, std::size_t m) {
  if (m == 0 || m > e.size()) {
    throw DimensionError("mrl_truncate: m=" + std::to_string(m) + " not in [1, " +
                         std::to_string(e.size()) + "]");
  }
  const auto head = e.subspan(0, m);
  if (!(l2_norm(head) > 0.0)) {
    throw DegenerateInputError("mrl_truncate: zero vector after truncation");
  }
  return normalized(head);
}

/// Pulls a gradient w.r.t. mrl_truncate(e, m) back to e. Valid for any e whose
/// first m components are not all zero (e need not be unit length).
inline Vec mrl_truncate_backward(std::span<const double> e, std::size_t m,
                                 std::span<const double> upstream) {
  if (m == 0 || m > e.size() || upstream.size() != m) {
    throw DimensionError("mrl_truncate_backward: dimension mismatch");
  }
  const auto head = e.subspan(0, m);
  const double n = l2_norm(head);
  if (!(n > 0.0)) throw DegenerateInputError("mrl_truncate_backward: zero head");
  double yg = 0.0;
  for (std::size_t i = 0; i < m; ++i) yg += (head[i] / n) * upstream[i];
  Vec g(e.size(), 0.0);
  for (std::size_t i = 0; i < m; ++i) g[i] = (upstream[i] - (head[i] / n) * yg) / n;
  return g;
}

/// Accumulates d(upstream . encode(params, input))/d(params) into acc.
inline void backward_into(const EncoderParams& params, const TokenSeq& input,
                          const ForwardTrace& trace, std::span<const double> upstream,
                          GradientBundle& acc) {
  const auto& layout = params.layout;
  if (upstream.size() != layout.out_dim()) {
    throw DimensionError("backward: upstream gradient has wrong dimension");
  }
  if (!(acc.layout == layout)) throw DimensionError("backward: accumulator shape mismatch");
  if (!all_finite(upstream)) throw NumericError("backward: non-finite upstream gradient");

  // Through the normalization: dz = (g - y (y.g)) / |z|.
  const auto& y = trace.output;
  const double yg = dot(y, upstream);
  Vec delta(layout.out_dim());
  for (std::size_t i = 0; i < delta.size(); ++i) {
    delta[i] = (upstream[i] - y[i] * yg) / trace.norm;
  }

  for (std::size_t l = layout.num_layers(); l-- > 0;) {
    const Vec& x = l == 0 ? trace.pooled : trace.hidden[l - 1];
    const std::size_t in = layout.in_dim(l);
    auto gw = acc.weight(l);
    auto gb = acc.bias(l);
    for (std::size_t r = 0; r < delta.size(); ++r) {
      gb[r] += delta[r];
      double* grow = gw.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) grow[c] += delta[r] * x[c];
    }
    Vec dx(in, 0.0);
    const auto w = params.weight(l);
    for (std::size_t r = 0; r < delta.size(); ++r) {
      const double* row = w.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) dx[c] += row[c] * delta[r];
    }
    if (l > 0) {
      const Vec& a = trace.hidden[l - 1];
      for (std::size_t c = 0; c < in; ++c) dx[c] *= 1.0 - a[c] * a[c];
    }
    delta = std::move(dx);
  }

  const double inv_len = 1.0 / static_cast<double>(input.ids.size());
  for (auto id : input.ids) {
    auto row = acc.embed_row(id);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += delta[j] * inv_len;
  }
}

inline GradientBundle backward(const EncoderParams& params, const TokenSeq& input,
                               std::span<const double> upstream) {
  const auto trace = forward(params, input);
  GradientBundle g(params.layout);
  backward_into(params, input, trace, upstream, g);
  return g;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline std::string checkpoint_bytes(const EncoderParams& params) {
  params.validate();
  Json header = {{"role", to_string(params.role)},
                 {"vocab_size", params.vocab_size()},
                 {"dims", params.layout.dims()},
                 {"seed", params.seed},
                 {"stage_tag", params.stage_tag}};
  return encode_framed(header, params.values);
}

inline EncoderParams checkpoint_from_bytes(std::string_view bytes) {
  auto blob = decode_framed(bytes);
  const auto& h = blob.header;
  EncoderParams p;
  try {
    p = EncoderParams(role_from_string(h.at("role").get<std::string>()),
                      h.at("vocab_size").get<std::size_t>(),
                      h.at("dims").get<std::vector<std::size_t>>());
    p.seed = h.at("seed").get<std::uint64_t>();
    p.stage_tag = h.at("stage_tag").get<std::string>();
  } catch (const Json::exception& e) {
    throw IoError(std::string("checkpoint header: ") + e.what());
  }
  if (blob.payload.size() != p.layout.size()) {
    throw IoError("checkpoint payload has " + std::to_string(blob.payload.size()) +
                  " values, shape needs " + std::to_string(p.layout.size()));
  }
  p.values = std::move(blob.payload);
  p.validate();
  return p;
}

inline void save_checkpoint(const EncoderParams& params, const std::string& path) {
  write_file(path, checkpoint_bytes(params));
}

inline EncoderParams load_checkpoint(const std::string& path) {
  return checkpoint_from_bytes(read_file(path));
}

inline std::string checkpoint_hash(const EncoderParams& params) {
  return hex64(fnv1a64(checkpoint_bytes(params)));
}

}  // namespace asym
