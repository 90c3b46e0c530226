#include "seqdream/resnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "seqdream/common.hpp"

namespace seqdream {

void ResNetConfig::validate() const {
  if (blocks < 1) fail(ErrorKind::config, "resnet: blocks must be >= 1");
  if (convs_per_block < 1) fail(ErrorKind::config, "resnet: convs_per_block must be >= 1");
  if (static_cast<int>(channels.size()) != blocks)
    fail(ErrorKind::config, "resnet: channels list has " + std::to_string(channels.size()) +
                                " entries for " + std::to_string(blocks) + " blocks");
  if (static_cast<int>(kernels.size()) != convs_per_block)
    fail(ErrorKind::config, "resnet: kernels list has " + std::to_string(kernels.size()) +
                                " entries for " + std::to_string(convs_per_block) +
                                " convs per block");
  for (int c : channels)
    if (c < 1) fail(ErrorKind::config, "resnet: channel counts must be positive");
  for (int k : kernels)
    if (k < 1 || k > 31 || k % 2 == 0)
      fail(ErrorKind::config, "resnet: kernel sizes must be odd and in [1, 31], got " +
                                  std::to_string(k));
  if (num_classes < 2) fail(ErrorKind::config, "resnet: num_classes must be >= 2");
  if (input_length < 1) fail(ErrorKind::config, "resnet: input_length must be >= 1");
}

namespace {

int block_in_channels(const ResNetConfig& cfg, int b) {
  return b == 0 ? 1 : cfg.channels[b - 1];
}

// One canonical walk shared by trainable_params, the name list, and forward,
// so parameter order is identical everywhere.
void walk_params(ModelWeights& model,
                 const std::function<void(const std::string&, Tensor&)>& fn) {
  for (int b = 0; b < model.config.blocks; ++b) {
    ResBlock& blk = model.blocks[b];
    const std::string prefix = "block" + std::to_string(b) + ".";
    for (int i = 0; i < model.config.convs_per_block; ++i) {
      const std::string ci = std::to_string(i);
      fn(prefix + "conv" + ci + ".weight", blk.convs[i].w);
      fn(prefix + "conv" + ci + ".bias", blk.convs[i].b);
      fn(prefix + "bn" + ci + ".gamma", blk.bns[i].gamma);
      fn(prefix + "bn" + ci + ".beta", blk.bns[i].beta);
    }
    if (blk.proj) {
      fn(prefix + "proj.weight", blk.proj->w);
      fn(prefix + "proj.bias", blk.proj->b);
    }
  }
  fn("fc.weight", model.fc_w);
  fn("fc.bias", model.fc_b);
}

}  // namespace

std::vector<Tensor*> trainable_params(ModelWeights& model) {
  std::vector<Tensor*> out;
  walk_params(model, [&out](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<std::string> trainable_param_names(const ModelWeights& model) {
  std::vector<std::string> out;
  walk_params(const_cast<ModelWeights&>(model),
              [&out](const std::string& name, Tensor&) { out.push_back(name); });
  return out;
}

ModelWeights build_resnet(const ResNetConfig& cfg, uint64_t seed) {
  cfg.validate();
  ModelWeights model;
  model.config = cfg;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);

  auto he_fill = [&](Tensor& t, int fan_in) {
    const double scale = std::sqrt(2.0 / fan_in);
    for (double& v : t.data) v = scale * dist(rng);
  };

  for (int b = 0; b < cfg.blocks; ++b) {
    ResBlock blk;
    const int in_ch = block_in_channels(cfg, b);
    const int out_ch = cfg.channels[b];
    for (int i = 0; i < cfg.convs_per_block; ++i) {
      const int ci = i == 0 ? in_ch : out_ch;
      const int k = cfg.kernels[i];
      ConvParams conv{Tensor::zeros({out_ch, ci, k}), Tensor::zeros({out_ch})};
      he_fill(conv.w, ci * k);
      blk.convs.push_back(std::move(conv));
      BnParams bn{Tensor::full({out_ch}, 1.0), Tensor::zeros({out_ch}), {}};
      bn.state.running_mean.assign(out_ch, 0.0);
      bn.state.running_var.assign(out_ch, 1.0);
      blk.bns.push_back(std::move(bn));
    }
    if (in_ch != out_ch) {
      ConvParams proj{Tensor::zeros({out_ch, in_ch, 1}), Tensor::zeros({out_ch})};
      he_fill(proj.w, in_ch);
      blk.proj = std::move(proj);
    }
    model.blocks.push_back(std::move(blk));
  }
  model.fc_w = Tensor::zeros({cfg.num_classes, cfg.channels.back()});
  model.fc_b = Tensor::zeros({cfg.num_classes});
  he_fill(model.fc_w, cfg.channels.back());
  return model;
}

ForwardTap resnet_forward(Tape& tape, ModelWeights& model, Tape::Id input, BnMode mode,
                          bool params_require_grad) {
  ForwardTap tap;
  auto reg = [&](Tensor& t) {
    Tensor leaf_t = t;
    leaf_t.requires_grad = params_require_grad;
    leaf_t.grad.clear();
    const Tape::Id id = tape.leaf(leaf_t);
    tap.params.push_back(id);
    return id;
  };

  Tape::Id h = input;
  for (int b = 0; b < model.config.blocks; ++b) {
    ResBlock& blk = model.blocks[b];
    const Tape::Id block_in = h;
    Tape::Id cur = h;
    for (int i = 0; i < model.config.convs_per_block; ++i) {
      const Tape::Id w = reg(blk.convs[i].w);
      const Tape::Id bias = reg(blk.convs[i].b);
      cur = tape.conv1d(cur, w, bias);
      const Tape::Id gamma = reg(blk.bns[i].gamma);
      const Tape::Id beta = reg(blk.bns[i].beta);
      cur = tape.batchnorm1d(cur, gamma, beta, blk.bns[i].state, mode);
      if (i + 1 < model.config.convs_per_block) cur = tape.relu(cur);
    }
    Tape::Id skip = block_in;
    if (blk.proj) {
      const Tape::Id pw = reg(blk.proj->w);
      const Tape::Id pb = reg(blk.proj->b);
      skip = tape.conv1d(block_in, pw, pb);
    }
    h = tape.relu(tape.add(cur, skip));
    tap.block_outputs.push_back(h);
  }
  tap.pooled = tape.global_avg_pool(h);
  // Registered as named steps: argument evaluation order is unspecified, and
  // tap.params must match the walk_params order (weight before bias).
  const Tape::Id fw = reg(model.fc_w);
  const Tape::Id fb = reg(model.fc_b);
  tap.logits = tape.linear(tap.pooled, fw, fb);
  return tap;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

std::vector<EpochStats> train(ModelWeights& model, const Dataset& data, const TrainConfig& cfg) {
  model.config.validate();
  if (cfg.epochs < 0) fail(ErrorKind::config, "train: epochs must be >= 0");
  if (cfg.lr <= 0.0) fail(ErrorKind::config, "train: learning rate must be > 0");
  if (cfg.batch_size < 1) fail(ErrorKind::config, "train: batch_size must be >= 1");
  if (data.size() == 0) fail(ErrorKind::shape, "train: empty dataset");
  if (data.length != model.config.input_length)
    fail(ErrorKind::shape, "train: dataset length " + std::to_string(data.length) +
                               " does not match model input_length " +
                               std::to_string(model.config.input_length));
  if (data.num_classes != model.config.num_classes)
    fail(ErrorKind::shape, "train: dataset has " + std::to_string(data.num_classes) +
                               " classes, model expects " +
                               std::to_string(model.config.num_classes));

  const std::vector<Tensor*> params = trainable_params(model);
  struct AdamSlot {
    std::vector<double> m, v;
  };
  std::vector<AdamSlot> adam(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    adam[i].m.assign(params[i]->data.size(), 0.0);
    adam[i].v.assign(params[i]->data.size(), 0.0);
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order(data.size());
  for (int i = 0; i < data.size(); ++i) order[i] = i;

  const int n = data.size();
  const int len = data.length;
  std::vector<EpochStats> history;
  int64_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int correct = 0;
    for (int start = 0, batch_no = 0; start < n; start += cfg.batch_size, ++batch_no) {
      const int bsize = std::min(cfg.batch_size, n - start);
      std::vector<double> input(static_cast<size_t>(bsize) * len);
      std::vector<int> labels(bsize);
      for (int r = 0; r < bsize; ++r) {
        const LabeledSeries& s = data.series[order[start + r]];
        std::copy(s.values.begin(), s.values.end(), input.begin() + static_cast<size_t>(r) * len);
        labels[r] = s.label;
      }

      Tape tape;
      const Tape::Id in = tape.leaf({bsize, 1, len}, std::move(input), false);
      ForwardTap tap = resnet_forward(tape, model, in, BnMode::train, true);
      const Tape::Id loss = tape.softmax_cross_entropy_mean(tap.logits, labels);
      const double loss_val = tape.scalar(loss);
      if (!std::isfinite(loss_val))
        fail(ErrorKind::numeric, "train: non-finite loss at epoch " + std::to_string(epoch) +
                                     " batch " + std::to_string(batch_no));
      loss_sum += loss_val * bsize;

      const Tensor& lg = tape.value(tap.logits);
      const int k = model.config.num_classes;
      for (int r = 0; r < bsize; ++r) {
        int arg = 0;
        for (int j = 1; j < k; ++j)
          if (lg.data[static_cast<size_t>(r) * k + j] > lg.data[static_cast<size_t>(r) * k + arg])
            arg = j;
        correct += arg == labels[r];
      }

      tape.backward(loss);
      ++step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (size_t p = 0; p < params.size(); ++p) {
        const std::vector<double>& g = tape.grad(tap.params[p]);
        std::vector<double>& w = params[p]->data;
        AdamSlot& slot = adam[p];
        for (size_t j = 0; j < w.size(); ++j) {
          slot.m[j] = cfg.beta1 * slot.m[j] + (1.0 - cfg.beta1) * g[j];
          slot.v[j] = cfg.beta2 * slot.v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
          const double mhat = slot.m[j] / bc1;
          const double vhat = slot.v[j] / bc2;
          w[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps_adam);
        }
      }
    }
    history.push_back(EpochStats{loss_sum / n, static_cast<double>(correct) / n});
  }
  return history;
}

// ---------------------------------------------------------------------------
// Eval-mode queries
// ---------------------------------------------------------------------------

LayerSelector LayerSelector::parse(const std::string& text) {
  if (text == "logits") return {Kind::logits, 0};
  if (text == "penultimate") return {Kind::penultimate, 0};
  if (text.rfind("block", 0) == 0) {
    const std::string idx = text.substr(5);
    if (!idx.empty() && idx.find_first_not_of("0123456789") == std::string::npos)
      return {Kind::block, std::stoi(idx)};
  }
  fail(ErrorKind::config,
       "invalid layer selector '" + text + "' (expected logits, penultimate, or blockN)");
}

std::string LayerSelector::str() const {
  switch (kind) {
    case Kind::logits: return "logits";
    case Kind::penultimate: return "penultimate";
    case Kind::block: return "block" + std::to_string(block_index);
  }
  return "logits";
}

namespace {

void check_series_length(const ModelWeights& model, size_t got) {
  if (static_cast<int>(got) != model.config.input_length)
    fail(ErrorKind::shape, "series length " + std::to_string(got) +
                               " does not match model input_length " +
                               std::to_string(model.config.input_length));
}

// Eval-mode forward never mutates BN state, so a const model is safe here.
std::vector<std::vector<double>> eval_batch(const ModelWeights& model,
                                            const std::vector<std::vector<double>>& series,
                                            const LayerSelector& layer) {
  if (layer.kind == LayerSelector::Kind::block &&
      (layer.block_index < 0 || layer.block_index >= model.config.blocks))
    fail(ErrorKind::config, "layer selector block index " + std::to_string(layer.block_index) +
                                " out of range for " + std::to_string(model.config.blocks) +
                                " blocks");
  ModelWeights& m = const_cast<ModelWeights&>(model);
  const int len = model.config.input_length;
  std::vector<std::vector<double>> out;
  out.reserve(series.size());
  const size_t chunk = 128;
  for (size_t start = 0; start < series.size(); start += chunk) {
    const int bsize = static_cast<int>(std::min(chunk, series.size() - start));
    std::vector<double> input(static_cast<size_t>(bsize) * len);
    for (int r = 0; r < bsize; ++r) {
      check_series_length(model, series[start + r].size());
      std::copy(series[start + r].begin(), series[start + r].end(),
                input.begin() + static_cast<size_t>(r) * len);
    }
    Tape tape;
    const Tape::Id in = tape.leaf({bsize, 1, len}, std::move(input), false);
    ForwardTap tap = resnet_forward(tape, m, in, BnMode::eval, false);
    Tape::Id sel = tap.logits;
    if (layer.kind == LayerSelector::Kind::penultimate) sel = tap.pooled;
    if (layer.kind == LayerSelector::Kind::block) sel = tap.block_outputs[layer.block_index];
    const Tensor& t = tape.value(sel);
    const size_t row = t.data.size() / bsize;
    for (int r = 0; r < bsize; ++r)
      out.emplace_back(t.data.begin() + static_cast<size_t>(r) * row,
                       t.data.begin() + static_cast<size_t>(r + 1) * row);
  }
  return out;
}

}  // namespace

std::vector<double> logits(const ModelWeights& model, const std::vector<double>& series) {
  return eval_batch(model, {series}, LayerSelector{})[0];
}

std::vector<std::vector<double>> logits_batch(const ModelWeights& model,
                                              const std::vector<std::vector<double>>& series) {
  return eval_batch(model, series, LayerSelector{});
}

std::vector<double> activations(const ModelWeights& model, const std::vector<double>& series,
                                const LayerSelector& layer) {
  return eval_batch(model, {series}, layer)[0];
}

std::vector<std::vector<double>> activations_batch(const ModelWeights& model,
                                                   const std::vector<std::vector<double>>& series,
                                                   const LayerSelector& layer) {
  return eval_batch(model, series, layer);
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kMagic = "SEQDREAM-W1";

void write_blob(std::ofstream& out, const std::string& name, const std::vector<int>& shape,
                const std::vector<double>& data) {
  out << "tensor " << name << ' ' << shape.size();
  for (int d : shape) out << ' ' << d;
  out << '\n';
  for (size_t i = 0; i < data.size(); ++i)
    out << fmt_double(data[i]) << (i % 6 == 5 || i + 1 == data.size() ? '\n' : ' ');
}

}  // namespace

void save_weights(const ModelWeights& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write weights file: " + path.string());
  const ResNetConfig& cfg = model.config;
  out << kMagic << '\n';
  out << "blocks " << cfg.blocks << '\n';
  out << "convs_per_block " << cfg.convs_per_block << '\n';
  out << "channels";
  for (int c : cfg.channels) out << ' ' << c;
  out << '\n';
  out << "kernels";
  for (int k : cfg.kernels) out << ' ' << k;
  out << '\n';
  out << "num_classes " << cfg.num_classes << '\n';
  out << "input_length " << cfg.input_length << '\n';

  std::vector<std::pair<std::string, const Tensor*>> tensors;
  walk_params(const_cast<ModelWeights&>(model),
              [&tensors](const std::string& name, Tensor& t) { tensors.emplace_back(name, &t); });
  int blob_count = static_cast<int>(tensors.size());
  for (const ResBlock& blk : model.blocks) blob_count += 2 * static_cast<int>(blk.bns.size());
  out << "tensors " << blob_count << '\n';

  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string prefix = "block" + std::to_string(b) + ".";
    const ResBlock& blk = model.blocks[b];
    for (int i = 0; i < cfg.convs_per_block; ++i) {
      const std::string ci = std::to_string(i);
      write_blob(out, prefix + "conv" + ci + ".weight", blk.convs[i].w.shape, blk.convs[i].w.data);
      write_blob(out, prefix + "conv" + ci + ".bias", blk.convs[i].b.shape, blk.convs[i].b.data);
      write_blob(out, prefix + "bn" + ci + ".gamma", blk.bns[i].gamma.shape, blk.bns[i].gamma.data);
      write_blob(out, prefix + "bn" + ci + ".beta", blk.bns[i].beta.shape, blk.bns[i].beta.data);
      const int c = blk.bns[i].gamma.shape[0];
      write_blob(out, prefix + "bn" + ci + ".running_mean", {c}, blk.bns[i].state.running_mean);
      write_blob(out, prefix + "bn" + ci + ".running_var", {c}, blk.bns[i].state.running_var);
    }
    if (blk.proj) {
      write_blob(out, prefix + "proj.weight", blk.proj->w.shape, blk.proj->w.data);
      write_blob(out, prefix + "proj.bias", blk.proj->b.shape, blk.proj->b.data);
    }
  }
  write_blob(out, "fc.weight", model.fc_w.shape, model.fc_w.data);
  write_blob(out, "fc.bias", model.fc_b.shape, model.fc_b.data);
  out << "end\n";
  if (!out) fail(ErrorKind::io, "write failed: " + path.string());
}

namespace {

[[noreturn]] void corrupt(const std::filesystem::path& path, const std::string& why) {
  fail(ErrorKind::weights_corrupt, "weights file " + path.string() + ": " + why);
}

template <typename T>
T read_kv(std::ifstream& in, const std::filesystem::path& path, const std::string& key) {
  std::string k;
  T v{};
  if (!(in >> k >> v) || k != key) corrupt(path, "expected '" + key + "' entry");
  return v;
}

}  // namespace

ModelWeights load_weights(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    fail(ErrorKind::weights_missing, "weights file not found: " + path.string());
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open weights file: " + path.string());

  std::string magic;
  in >> magic;
  if (magic != kMagic) {
    if (magic.rfind("SEQDREAM-W", 0) == 0)
      fail(ErrorKind::weights_version,
           "weights file " + path.string() + " has version tag '" + magic + "', expected '" +
               kMagic + "'");
    corrupt(path, "missing magic string");
  }

  ResNetConfig cfg;
  cfg.blocks = read_kv<int>(in, path, "blocks");
  cfg.convs_per_block = read_kv<int>(in, path, "convs_per_block");
  std::string key;
  if (!(in >> key) || key != "channels") corrupt(path, "expected 'channels' entry");
  cfg.channels.assign(cfg.blocks, 0);
  for (int& c : cfg.channels)
    if (!(in >> c)) corrupt(path, "truncated channels list");
  if (!(in >> key) || key != "kernels") corrupt(path, "expected 'kernels' entry");
  cfg.kernels.assign(cfg.convs_per_block, 0);
  for (int& k : cfg.kernels)
    if (!(in >> k)) corrupt(path, "truncated kernels list");
  cfg.num_classes = read_kv<int>(in, path, "num_classes");
  cfg.input_length = read_kv<int>(in, path, "input_length");
  try {
    cfg.validate();
  } catch (const Error& e) {
    corrupt(path, std::string("embedded config invalid: ") + e.what());
  }

  const int blob_count = read_kv<int>(in, path, "tensors");
  ModelWeights model = build_resnet(cfg, 0);

  std::map<std::string, std::pair<std::vector<int>, std::vector<double>*>> slots;
  walk_params(model, [&slots](const std::string& name, Tensor& t) {
    slots[name] = {t.shape, &t.data};
  });
  for (int b = 0; b < cfg.blocks; ++b)
    for (int i = 0; i < cfg.convs_per_block; ++i) {
      BnParams& bn = model.blocks[b].bns[i];
      const std::string prefix = "block" + std::to_string(b) + ".bn" + std::to_string(i) + ".";
      const std::vector<int> shape{cfg.channels[b]};
      slots[prefix + "running_mean"] = {shape, &bn.state.running_mean};
      slots[prefix + "running_var"] = {shape, &bn.state.running_var};
    }
  if (blob_count != static_cast<int>(slots.size()))
    corrupt(path, "tensor count " + std::to_string(blob_count) + " does not match config (" +
                      std::to_string(slots.size()) + " expected)");

  std::map<std::string, bool> seen;
  for (int t = 0; t < blob_count; ++t) {
    std::string tag, name;
    if (!(in >> tag) || tag != "tensor") corrupt(path, "expected tensor block");
    int rank = 0;
    if (!(in >> name >> rank) || rank < 1 || rank > 4) corrupt(path, "bad tensor header");
    std::vector<int> shape(rank);
    int64_t numel = 1;
    for (int& d : shape) {
      if (!(in >> d) || d < 1) corrupt(path, "bad tensor shape for " + name);
      numel *= d;
    }
    const auto it = slots.find(name);
    if (it == slots.end()) corrupt(path, "unknown tensor '" + name + "'");
    if (it->second.first != shape)
      fail(ErrorKind::weights_corrupt,
           "weights file " + path.string() + ": tensor " + name + " shape mismatch vs config");
    std::vector<double>& dst = *it->second.second;
    dst.resize(numel);
    for (int64_t j = 0; j < numel; ++j) {
      if (!(in >> dst[j])) corrupt(path, "truncated values for " + name);
      if (!std::isfinite(dst[j])) corrupt(path, "non-finite value in " + name);
    }
    seen[name] = true;
  }
  if (seen.size() != slots.size()) corrupt(path, "missing tensors");
  std::string end_tag;
  if (!(in >> end_tag) || end_tag != "end") corrupt(path, "missing end marker (truncated file?)");
  return model;
}

}  // namespace seqdream
