#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "camkd/autodiff.hpp"
#include "camkd/tensor.hpp"

namespace camkd {

/// Affine map y = x W + b with W of shape in x out and b of shape 1 x out.
struct Linear {
  Tensor weight;
  Tensor bias;

  std::size_t in_width() const { return weight.rows(); }
  std::size_t out_width() const { return weight.cols(); }

  bool operator==(const Linear&) const = default;
};

/// Stack of ReLU blocks followed by a linear classifier. The output of the last
/// block is the feature map F; the classifier maps the pooled features to logits.
struct BlockNet {
  std::vector<Linear> blocks;
  Linear classifier;
  std::uint64_t seed = 0;

  std::size_t input_width() const;
  std::size_t feature_width() const { return classifier.in_width(); }
  std::size_t classes() const { return classifier.out_width(); }
  /// Widths as passed to init_net: input, then one entry per block.
  std::vector<std::size_t> layer_widths() const;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

  bool operator==(const BlockNet&) const = default;
};

struct ForwardOutputs {
  Tensor features;  // F, batch x feature_width
  Tensor pooled;    // h = AvgPooling(F)
  Tensor logits;    // z, batch x classes
};

/// Linear map from the student feature width to one teacher's feature width.
struct Adapter {
  Tensor projection;  // student_width x teacher_width

  std::size_t in_width() const { return projection.rows(); }
  std::size_t out_width() const { return projection.cols(); }

  bool operator==(const Adapter&) const = default;
};

/// He-normal initialisation (std = sqrt(2 / fan_in)), zero biases. `layer_widths`
/// lists the input width followed by every block width, so {20, 64, 64} is a
/// two-block net on 20 inputs. Throws ParameterError for fewer than two widths,
/// zero widths or zero classes.
BlockNet init_net(std::span<const std::size_t> layer_widths, std::size_t classes,
                  std::uint64_t seed);

Adapter init_adapter(std::size_t in_width, std::size_t out_width, std::uint64_t seed);
Adapter identity_adapter(std::size_t width);

/// Frozen evaluation; nothing is recorded.
ForwardOutputs forward_full(const BlockNet& net, const Tensor& x);
Tensor adapt(const Adapter& r, const Tensor& features);

/// A network whose parameters are registered as leaves of a graph.
struct BoundNet {
  const BlockNet* net = nullptr;
  std::vector<Var> params;  // same order as BlockNet::parameters()
};

struct ForwardVars {
  Var features;
  Var pooled;
  Var logits;
};

BoundNet bind(Graph& g, const BlockNet& net);
ForwardVars forward_full(const BoundNet& bound, Var x);
Var adapt(Var projection, Var features);

/// Checkpoint I/O. The container is a JSON document (see README) whose doubles
/// round-trip bit-exactly.
void save_checkpoint(const BlockNet& net, const std::filesystem::path& path);
BlockNet load_checkpoint(const std::filesystem::path& path);
void save_adapters(std::span<const Adapter> adapters, const std::filesystem::path& path);
std::vector<Adapter> load_adapters(const std::filesystem::path& path);

}  // namespace camkd
