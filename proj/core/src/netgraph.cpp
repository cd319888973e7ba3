#include "bldgnet/netgraph.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "bldgnet/upsample.hpp"

namespace bldg {

int NetworkSpec::fusion_input_channels() const {
  int n = 0;
  for (const auto& s : stages)
    if (s.tapped) n += s.filter_count;
  return n;
}

int NetworkSpec::total_stride() const {
  int stride = 1;
  for (const auto& s : stages) stride *= s.pool;
  return stride;
}

int NetworkSpec::input_multiple() const {
  return std::max(16, total_stride());
}

int NetworkSpec::tap_factor(std::size_t stage) const {
  int f = 1;
  for (std::size_t i = 1; i <= stage && i < stages.size(); ++i)
    f *= stages[i].pool;
  return f;
}

void NetworkSpec::validate_layers() const {
  if (stages.empty()) throw ValueError("network spec has no stages");
  if (input_channels < 1)
    throw ValueError("network spec: input_channels must be >= 1");
  if (fusion_classes < 2)
    throw ValueError("network spec: classes must be >= 2");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const StageSpec& s = stages[i];
    const std::string where = "stage " + std::to_string(i + 1) + ": ";
    if (s.filter_count < 1)
      throw ValueError(where + "filter count must be >= 1");
    if (s.filter_size < 1 || s.filter_size % 2 == 0)
      throw ValueError(where + "filter size must be odd, got " +
                       std::to_string(s.filter_size));
    if (s.pool != 1 && s.pool != 2)
      throw ValueError(where + "pool must be 1 or 2, got " +
                       std::to_string(s.pool));
  }
}

void NetworkSpec::validate() const {
  validate_layers();
  if (stages.front().pool != 2)
    throw ValueError("stage 1 must pool: predictions are made at half the "
                     "input resolution");
  if (!stages.back().tapped)
    throw ValueError("the last stage must be tapped into the fusion head");
}

NetworkSpec paper_network() {
  NetworkSpec spec;
  spec.stages = {{50, 5, 2, true},  {70, 5, 2, true},   {100, 3, 2, true},
                 {150, 3, 2, false}, {100, 3, 1, false}, {70, 3, 1, false},
                 {70, 3, 1, true}};
  spec.input_channels = 3;
  spec.fusion_classes = 128;
  return spec;
}

NetworkSpec scaled_network(const std::vector<int>& filter_counts,
                           int fusion_classes) {
  NetworkSpec spec = paper_network();
  if (filter_counts.size() != spec.stages.size()) {
    throw ValueError("scaled_network: expected " +
                     std::to_string(spec.stages.size()) +
                     " filter counts, got " +
                     std::to_string(filter_counts.size()));
  }
  for (std::size_t i = 0; i < filter_counts.size(); ++i)
    spec.stages[i].filter_count = filter_counts[i];
  spec.fusion_classes = fusion_classes;
  spec.validate();
  return spec;
}

NetworkSpec parse_network_spec(const std::string& text) {
  NetworkSpec spec;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw ParseError("line " + std::to_string(line_no) + ": " + msg);
  };
  auto read_int = [&](std::istringstream& ls, const char* what) {
    long long v;
    if (!(ls >> v)) fail(std::string("expected integer ") + what);
    if (v < 0 || v > 1'000'000) fail(std::string(what) + " out of range");
    return static_cast<int>(v);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "stage") {
      StageSpec s;
      s.filter_count = read_int(ls, "filter count");
      s.filter_size = read_int(ls, "filter size");
      s.pool = read_int(ls, "pool");
      std::string flag;
      if (ls >> flag) {
        if (flag != "tap") fail("unexpected token '" + flag + "'");
        s.tapped = true;
      }
      if (s.filter_size % 2 == 0) fail("filter size must be odd");
      if (s.pool != 1 && s.pool != 2) fail("pool must be 1 or 2");
      spec.stages.push_back(s);
    } else if (key == "classes") {
      spec.fusion_classes = read_int(ls, "class count");
    } else if (key == "input_channels") {
      spec.input_channels = read_int(ls, "input channel count");
    } else {
      fail("unknown directive '" + key + "'");
    }
    std::string extra;
    if (ls >> extra) fail("trailing token '" + extra + "'");
  }
  if (spec.stages.empty()) {
    line_no = std::max(line_no, 1);
    fail("no stage directives");
  }
  return spec;
}

std::string format_network_spec(const NetworkSpec& spec) {
  std::ostringstream os;
  os << "input_channels " << spec.input_channels << '\n';
  os << "classes " << spec.fusion_classes << '\n';
  for (const auto& s : spec.stages) {
    os << "stage " << s.filter_count << ' ' << s.filter_size << ' ' << s.pool;
    if (s.tapped) os << " tap";
    os << '\n';
  }
  return os.str();
}

std::vector<long long> receptive_field_profile(const NetworkSpec& spec) {
  const std::size_t m = spec.stages.size();
  std::vector<long long> r(m + 1);
  r[m] = 1;
  for (std::size_t i = m; i-- > 0;) {
    const StageSpec& s = spec.stages[i];
    r[i] = s.pool * r[i + 1] + (s.filter_size - 1);
  }
  return r;
}

long long receptive_field(const NetworkSpec& spec) {
  return receptive_field_profile(spec).front();
}

template <typename T>
ParamGrads<T> ParamSet<T>::zeros_like() const {
  ParamGrads<T> g;
  for (const auto& l : layers) {
    g.filters.emplace_back(l.filters.shape());
    g.bias.emplace_back(l.bias.shape());
  }
  return g;
}

template <typename T>
std::vector<std::string> ParamSet<T>::array_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string base = i + 1 == layers.size()
                                 ? std::string("fusion")
                                 : "stage" + std::to_string(i + 1);
    names.push_back(base + ".filters");
    names.push_back(base + ".bias");
  }
  return names;
}

template <typename T>
ParamSet<T> init_params(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  ParamSet<T> params;

  auto make_layer = [&](std::size_t count, std::size_t k, std::size_t cin) {
    ConvParams<T> p;
    p.filters = Tensor<T>({count, k, k, cin});
    p.bias = Tensor<T>({count});
    p.padding = Padding::same_zero;
    const double fan_in = static_cast<double>(k * k * cin);
    const double fan_out = static_cast<double>(k * k * count);
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    for (auto& w : p.filters.values()) w = static_cast<T>(dist(rng));
    return p;
  };

  std::size_t cin = static_cast<std::size_t>(spec.input_channels);
  for (const auto& s : spec.stages) {
    params.layers.push_back(
        make_layer(static_cast<std::size_t>(s.filter_count),
                   static_cast<std::size_t>(s.filter_size), cin));
    cin = static_cast<std::size_t>(s.filter_count);
  }
  params.layers.push_back(
      make_layer(static_cast<std::size_t>(spec.fusion_classes), 1,
                 static_cast<std::size_t>(spec.fusion_input_channels())));
  params.velocity = params.zeros_like();
  return params;
}

namespace {

template <typename T>
void check_params(const NetworkSpec& spec, const ParamSet<T>& params) {
  if (params.layers.size() != spec.stages.size() + 1) {
    throw ShapeError("parameter set has " +
                     std::to_string(params.layers.size()) +
                     " layers, spec needs " +
                     std::to_string(spec.stages.size() + 1));
  }
}

// Copies `src` into channels [offset, offset + src.C) of `dst`.
template <typename T>
void put_channels(Tensor<T>& dst, const Tensor<T>& src, std::size_t offset) {
  const std::size_t pixels = src.dim(0) * src.dim(1);
  const std::size_t c = src.dim(2), total = dst.dim(2);
  for (std::size_t p = 0; p < pixels; ++p)
    std::copy(src.data() + p * c, src.data() + (p + 1) * c,
              dst.data() + p * total + offset);
}

template <typename T>
Tensor<T> take_channels(const Tensor<T>& src, std::size_t offset,
                        std::size_t count) {
  const std::size_t pixels = src.dim(0) * src.dim(1);
  const std::size_t total = src.dim(2);
  Tensor<T> out = Tensor<T>::hwc(src.dim(0), src.dim(1), count);
  for (std::size_t p = 0; p < pixels; ++p)
    std::copy(src.data() + p * total + offset,
              src.data() + p * total + offset + count, out.data() + p * count);
  return out;
}

}  // namespace

template <typename T>
ForwardResult<T> forward(const NetworkSpec& spec, const ParamSet<T>& params,
                         const Tensor<T>& image, bool keep_intermediates,
                         bool with_probs) {
  spec.validate();
  check_params(spec, params);
  if (image.rank() != 3 ||
      image.dim(2) != static_cast<std::size_t>(spec.input_channels)) {
    throw ShapeError("forward: image must be H x W x " +
                     std::to_string(spec.input_channels) + ", got " +
                     shape_string(image.shape()));
  }
  const auto multiple = static_cast<std::size_t>(spec.input_multiple());
  if (image.dim(0) == 0 || image.dim(1) == 0 || image.dim(0) % multiple != 0 ||
      image.dim(1) % multiple != 0) {
    throw ShapeError("forward: input extents " +
                     std::to_string(image.dim(0)) + "x" +
                     std::to_string(image.dim(1)) +
                     " must be positive multiples of " +
                     std::to_string(multiple));
  }

  ForwardResult<T> result;
  ForwardCache<T> cache;
  const std::size_t out_h = image.dim(0) / 2, out_w = image.dim(1) / 2;
  Tensor<T> stacked = Tensor<T>::hwc(
      out_h, out_w, static_cast<std::size_t>(spec.fusion_input_channels()));

  Tensor<T> x = image;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    const StageSpec& s = spec.stages[i];
    StageCache<T> sc;
    Tensor<T> pre = conv2d(x, params.layers[i]);
    Tensor<T> out = relu(pre);
    if (s.pool == 2) {
      PoolResult<T> pooled = maxpool2(out);
      out = std::move(pooled.output);
      if (keep_intermediates) sc.pool_argmax = std::move(pooled.argmax);
    }
    if (s.tapped) {
      put_channels(stacked, upsample_bilinear(out, spec.tap_factor(i)),
                   offset);
      offset += static_cast<std::size_t>(s.filter_count);
    }
    if (keep_intermediates) {
      sc.input = std::move(x);
      sc.pre_activation = std::move(pre);
      cache.stages.push_back(std::move(sc));
    }
    x = std::move(out);
  }

  Tensor<T> logits = conv2d(stacked, params.fusion());
  if (with_probs) result.probs = pixel_softmax(logits);
  if (keep_intermediates) {
    cache.stacked = std::move(stacked);
    cache.logits = std::move(logits);
    result.cache = std::move(cache);
  }
  return result;
}

template <typename T>
BackwardResult<T> backward(const NetworkSpec& spec, const ParamSet<T>& params,
                           const std::optional<ForwardCache<T>>& cache,
                           const ClassMap& labels,
                           const BackwardOptions& options) {
  if (!cache) {
    throw ValueError("backward: no forward cache; run forward with "
                     "keep_intermediates = true");
  }
  check_params(spec, params);
  const std::size_t m = spec.stages.size();
  if (cache->stages.size() != m) {
    throw ShapeError("backward: cache holds " +
                     std::to_string(cache->stages.size()) + " stages, spec " +
                     std::to_string(m));
  }
  auto cut = [](const std::vector<bool>& v, std::size_t i) {
    return i < v.size() && v[i];
  };

  BackwardResult<T> result;
  result.grads.filters.resize(m + 1);
  result.grads.bias.resize(m + 1);

  XentResult<T> xent = pixel_softmax_xent(cache->logits, labels);
  result.loss = xent.loss;
  ConvGrads<T> head =
      conv2d_vjp(cache->stacked, params.fusion(), xent.grad_logits);
  result.grads.filters[m] = std::move(head.filters);
  result.grads.bias[m] = std::move(head.bias);
  const Tensor<T>& d_stacked = head.input;

  // Channel offsets of each tapped stage inside the stack.
  std::vector<std::size_t> offsets(m, 0);
  for (std::size_t i = 0, off = 0; i < m; ++i) {
    offsets[i] = off;
    if (spec.stages[i].tapped)
      off += static_cast<std::size_t>(spec.stages[i].filter_count);
  }

  Tensor<T> from_next;
  for (std::size_t i = m; i-- > 0;) {
    const StageSpec& s = spec.stages[i];
    const StageCache<T>& sc = cache->stages[i];
    Shape out_shape = sc.pre_activation.shape();
    if (s.pool == 2) out_shape = sc.pool_argmax->output_shape;

    // Multivariable chain rule at the branch point: the stage output feeds
    // both the next stage and the fusion head, so both gradients add.
    Tensor<T> d_out(out_shape);
    if (i + 1 < m && !cut(options.cut_next_stage, i)) d_out += from_next;
    if (s.tapped && !cut(options.cut_fusion_branch, i)) {
      d_out += upsample_vjp(
          take_channels(d_stacked, offsets[i],
                        static_cast<std::size_t>(s.filter_count)),
          spec.tap_factor(i));
    }

    Tensor<T> d_act =
        s.pool == 2 ? maxpool2_vjp(*sc.pool_argmax, d_out) : std::move(d_out);
    Tensor<T> d_pre = relu_vjp(sc.pre_activation, d_act);
    ConvGrads<T> g = conv2d_vjp(sc.input, params.layers[i], d_pre, i > 0);
    result.grads.filters[i] = std::move(g.filters);
    result.grads.bias[i] = std::move(g.bias);
    from_next = std::move(g.input);
  }
  return result;
}

template <typename U, typename T>
ParamSet<U> convert_params(const ParamSet<T>& params) {
  ParamSet<U> out;
  for (const auto& l : params.layers) {
    out.layers.push_back(
        ConvParams<U>{l.filters.template cast<U>(), l.bias.template cast<U>(),
                      l.padding});
  }
  for (const auto& t : params.velocity.filters)
    out.velocity.filters.push_back(t.template cast<U>());
  for (const auto& t : params.velocity.bias)
    out.velocity.bias.push_back(t.template cast<U>());
  return out;
}

#define BLDG_INSTANTIATE_NETGRAPH(T)                                          \
  template struct ParamSet<T>;                                                \
  template ParamSet<T> init_params<T>(const NetworkSpec&, std::uint64_t);     \
  template ForwardResult<T> forward(const NetworkSpec&, const ParamSet<T>&,   \
                                    const Tensor<T>&, bool, bool);            \
  template BackwardResult<T> backward(                                        \
      const NetworkSpec&, const ParamSet<T>&,                                 \
      const std::optional<ForwardCache<T>>&, const ClassMap&,                 \
      const BackwardOptions&);

BLDG_INSTANTIATE_NETGRAPH(float)
BLDG_INSTANTIATE_NETGRAPH(double)

#undef BLDG_INSTANTIATE_NETGRAPH

template ParamSet<float> convert_params<float, double>(const ParamSet<double>&);
template ParamSet<double> convert_params<double, float>(const ParamSet<float>&);
template ParamSet<float> convert_params<float, float>(const ParamSet<float>&);
template ParamSet<double> convert_params<double, double>(
    const ParamSet<double>&);

}  // namespace bldg
