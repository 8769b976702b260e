#include "camkd/models.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

#include "camkd/errors.hpp"
#include "camkd/rng.hpp"

namespace camkd {

namespace {

using nlohmann::json;

constexpr const char* kNetFormat = "camkd.blocknet";
constexpr const char* kAdapterFormat = "camkd.adapters";
constexpr int kFormatVersion = 1;

Tensor he_normal(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor w(fan_in, fan_out);
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : w.values()) v = std_dev * rng.normal();
  return w;
}

json tensor_to_json(const Tensor& t) {
  return json{{"rows", t.rows()}, {"cols", t.cols()},
              {"data", std::vector<double>(t.values().begin(), t.values().end())}};
}

Tensor tensor_from_json(const json& j) {
  return Tensor(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

json linear_to_json(const Linear& l) {
  return json{{"weight", tensor_to_json(l.weight)}, {"bias", tensor_to_json(l.bias)}};
}

Linear linear_from_json(const json& j) {
  return Linear{tensor_from_json(j.at("weight")), tensor_from_json(j.at("bias"))};
}

json read_document(const std::filesystem::path& path, const char* format) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("checkpoint " + path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != format) {
    throw ParseError("checkpoint " + path.string() + ": expected format " + format);
  }
  if (doc.value("version", 0) != kFormatVersion) {
    throw ParseError("checkpoint " + path.string() + ": unsupported version");
  }
  return doc;
}

void write_document(const json& doc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

void check_linear_chain(const BlockNet& net) {
  std::size_t width = net.blocks.empty() ? 0 : net.blocks.front().in_width();
  for (const Linear& block : net.blocks) {
    if (block.in_width() != width || block.bias.shape() != Shape{1, block.out_width()}) {
      throw DimensionError("BlockNet: inconsistent block shapes");
    }
    width = block.out_width();
  }
  if (net.classifier.in_width() != width ||
      net.classifier.bias.shape() != Shape{1, net.classifier.out_width()}) {
    throw DimensionError("BlockNet: classifier width " +
                         std::to_string(net.classifier.in_width()) +
                         " does not match last block width " + std::to_string(width));
  }
}

}  // namespace

std::size_t BlockNet::input_width() const {
  return blocks.empty() ? classifier.in_width() : blocks.front().in_width();
}

std::vector<std::size_t> BlockNet::layer_widths() const {
  std::vector<std::size_t> widths{input_width()};
  for (const Linear& block : blocks) widths.push_back(block.out_width());
  return widths;
}

std::vector<Tensor*> BlockNet::parameters() {
  std::vector<Tensor*> out;
  for (Linear& block : blocks) {
    out.push_back(&block.weight);
    out.push_back(&block.bias);
  }
  out.push_back(&classifier.weight);
  out.push_back(&classifier.bias);
  return out;
}

std::vector<const Tensor*> BlockNet::parameters() const {
  std::vector<const Tensor*> out;
  for (const Linear& block : blocks) {
    out.push_back(&block.weight);
    out.push_back(&block.bias);
  }
  out.push_back(&classifier.weight);
  out.push_back(&classifier.bias);
  return out;
}

BlockNet init_net(std::span<const std::size_t> layer_widths, std::size_t classes,
                  std::uint64_t seed) {
  if (layer_widths.size() < 2) {
    throw ParameterError("init_net: need an input width and at least one block width");
  }
  for (const std::size_t w : layer_widths) {
    if (w == 0) throw ParameterError("init_net: widths must be positive");
  }
  if (classes == 0) throw ParameterError("init_net: class count must be positive");

  Rng rng(seed);
  BlockNet net;
  net.seed = seed;
  for (std::size_t i = 1; i < layer_widths.size(); ++i) {
    net.blocks.push_back(Linear{he_normal(layer_widths[i - 1], layer_widths[i], rng),
                                Tensor(1, layer_widths[i])});
  }
  net.classifier = Linear{he_normal(layer_widths.back(), classes, rng), Tensor(1, classes)};
  return net;
}

Adapter init_adapter(std::size_t in_width, std::size_t out_width, std::uint64_t seed) {
  if (in_width == 0 || out_width == 0) throw ParameterError("init_adapter: widths must be positive");
  Rng rng(seed);
  return Adapter{he_normal(in_width, out_width, rng)};
}

Adapter identity_adapter(std::size_t width) { return Adapter{Tensor::identity(width)}; }

ForwardOutputs forward_full(const BlockNet& net, const Tensor& x) {
  if (x.cols() != net.input_width()) {
    throw DimensionError("forward_full: input width " + std::to_string(x.cols()) +
                         " but network expects " + std::to_string(net.input_width()));
  }
  Tensor h = x;
  for (const Linear& block : net.blocks) {
    h = relu(add_row_broadcast(matmul(h, block.weight), block.bias));
  }
  ForwardOutputs out;
  out.pooled = avg_pool(h);
  out.logits = add_row_broadcast(matmul(out.pooled, net.classifier.weight), net.classifier.bias);
  out.features = std::move(h);
  return out;
}

Tensor adapt(const Adapter& r, const Tensor& features) {
  if (features.cols() != r.in_width()) {
    throw DimensionError("adapt: feature width " + std::to_string(features.cols()) +
                         " but adapter expects " + std::to_string(r.in_width()));
  }
  return matmul(features, r.projection);
}

BoundNet bind(Graph& g, const BlockNet& net) {
  BoundNet bound;
  bound.net = &net;
  for (const Tensor* p : net.parameters()) bound.params.push_back(g.parameter(*p));
  return bound;
}

ForwardVars forward_full(const BoundNet& bound, Var x) {
  const BlockNet& net = *bound.net;
  if (x.value().cols() != net.input_width()) {
    throw DimensionError("forward_full: input width " + std::to_string(x.value().cols()) +
                         " but network expects " + std::to_string(net.input_width()));
  }
  Var h = x;
  for (std::size_t b = 0; b < net.blocks.size(); ++b) {
    h = ad::relu(ad::add_row_broadcast(ad::matmul(h, bound.params[2 * b]), bound.params[2 * b + 1]));
  }
  ForwardVars out;
  out.features = h;
  out.pooled = ad::avg_pool(h);
  const std::size_t c = 2 * net.blocks.size();
  out.logits = ad::add_row_broadcast(ad::matmul(out.pooled, bound.params[c]), bound.params[c + 1]);
  return out;
}

Var adapt(Var projection, Var features) {
  if (features.value().cols() != projection.value().rows()) {
    throw DimensionError("adapt: feature width " + std::to_string(features.value().cols()) +
                         " but adapter expects " + std::to_string(projection.value().rows()));
  }
  return ad::matmul(features, projection);
}

void save_checkpoint(const BlockNet& net, const std::filesystem::path& path) {
  json blocks = json::array();
  for (const Linear& block : net.blocks) blocks.push_back(linear_to_json(block));
  const json doc{{"format", kNetFormat},
                 {"version", kFormatVersion},
                 {"seed", net.seed},
                 {"layer_widths", net.layer_widths()},
                 {"classes", net.classes()},
                 {"blocks", std::move(blocks)},
                 {"classifier", linear_to_json(net.classifier)}};
  write_document(doc, path);
}

BlockNet load_checkpoint(const std::filesystem::path& path) {
  const json doc = read_document(path, kNetFormat);
  try {
    BlockNet net;
    net.seed = doc.at("seed").get<std::uint64_t>();
    for (const json& block : doc.at("blocks")) net.blocks.push_back(linear_from_json(block));
    net.classifier = linear_from_json(doc.at("classifier"));
    check_linear_chain(net);
    if (net.layer_widths() != doc.at("layer_widths").get<std::vector<std::size_t>>() ||
        net.classes() != doc.at("classes").get<std::size_t>()) {
      throw ParseError("checkpoint " + path.string() + ": header does not match tensors");
    }
    return net;
  } catch (const json::exception& e) {
    throw ParseError("checkpoint " + path.string() + ": " + e.what());
  } catch (const DimensionError& e) {
    throw ParseError("checkpoint " + path.string() + ": " + e.what());
  }
}

void save_adapters(std::span<const Adapter> adapters, const std::filesystem::path& path) {
  json list = json::array();
  for (const Adapter& a : adapters) list.push_back(tensor_to_json(a.projection));
  write_document(json{{"format", kAdapterFormat}, {"version", kFormatVersion}, {"adapters", list}},
                 path);
}

std::vector<Adapter> load_adapters(const std::filesystem::path& path) {
  const json doc = read_document(path, kAdapterFormat);
  try {
    std::vector<Adapter> out;
    for (const json& a : doc.at("adapters")) out.push_back(Adapter{tensor_from_json(a)});
    return out;
  } catch (const std::exception& e) {
    throw ParseError("adapters " + path.string() + ": " + e.what());
  }
}

}  // namespace camkd
