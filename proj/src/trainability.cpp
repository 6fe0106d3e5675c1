#include "bnlab/trainability.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace bnlab {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t");
  size_t e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

int parse_k(const std::string& term, const std::string& head) {
  // head(k) or head(k=K)
  std::string inner = term.substr(head.size() + 1);
  if (inner.empty() || inner.back() != ')')
    throw ConfigError("malformed selector term: " + term);
  inner.pop_back();
  if (inner.rfind("k=", 0) == 0) inner = inner.substr(2);
  try {
    const int k = std::stoi(trim(inner));
    if (k < 1) throw ConfigError("selector " + head + " needs k >= 1");
    return k;
  } catch (const std::logic_error&) {
    throw ConfigError("malformed selector term: " + term);
  }
}

}  // namespace

GroupSelector GroupSelector::parse(const std::string& text) {
  GroupSelector sel;
  std::string cur;
  std::vector<std::string> terms;
  for (char ch : text) {
    if (ch == '+' || ch == ',') {
      terms.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  terms.push_back(cur);

  for (auto& raw : terms) {
    const std::string term = trim(raw);
    if (term.empty()) continue;
    if (term == "all")
      sel.all = true;
    else if (term == "batchnorm")
      sel.batchnorm = true;
    else if (term == "output")
      sel.output = true;
    else if (term == "shortcut")
      sel.shortcut = true;
    else if (term == "body")
      sel.body = true;
    else if (term.rfind("random_per_channel(", 0) == 0)
      sel.random_per_channel_k = parse_k(term, "random_per_channel");
    else if (term.rfind("random_scattered(", 0) == 0)
      sel.random_scattered_k = parse_k(term, "random_scattered");
    else
      throw ConfigError("unknown selector term: '" + term + "'");
  }
  if (sel.empty())
    throw ConfigError("empty selector: training nothing is disallowed, use eval instead");
  return sel;
}

std::string GroupSelector::str() const {
  std::vector<std::string> terms;
  if (all) terms.push_back("all");
  if (batchnorm) terms.push_back("batchnorm");
  if (output) terms.push_back("output");
  if (shortcut) terms.push_back("shortcut");
  if (body) terms.push_back("body");
  if (random_per_channel_k > 0)
    terms.push_back("random_per_channel(" + std::to_string(random_per_channel_k) + ")");
  if (random_scattered_k > 0)
    terms.push_back("random_scattered(" + std::to_string(random_scattered_k) + ")");
  std::string out;
  for (size_t i = 0; i < terms.size(); ++i) {
    if (i) out += "+";
    out += terms[i];
  }
  return out;
}

const std::vector<uint8_t>* TrainabilityMask::find(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return &bits[i];
  return nullptr;
}

bool TrainabilityMask::fully_trainable(size_t i) const {
  const auto& b = bits[i];
  return std::all_of(b.begin(), b.end(), [](uint8_t v) { return v != 0; });
}

bool TrainabilityMask::fully_frozen(size_t i) const {
  const auto& b = bits[i];
  return std::all_of(b.begin(), b.end(), [](uint8_t v) { return v == 0; });
}

TrainabilityMask build_mask(const LayerPlan& plan, const GroupSelector& sel, uint64_t seed) {
  if (sel.empty())
    throw ConfigError("empty selector: training nothing is disallowed, use eval instead");
  if (sel.random_per_channel_k > 0 && sel.random_scattered_k > 0)
    throw ConfigError("random_per_channel and random_scattered are mutually exclusive");

  TrainabilityMask mask;
  mask.selector = sel.str();
  mask.seed = seed;
  Prng rng = Prng(seed).split(RngStream::mask_selection);

  // Validate k against the smallest per-output-channel kernel size among
  // body convs before committing to any draw.
  const int k_req = std::max(sel.random_per_channel_k, sel.random_scattered_k);
  if (k_req > 0) {
    int smallest = -1;
    for (const auto& d : plan.layers)
      if (d.kind == LayerKind::conv && d.group == ParamGroup::body) {
        const int per_channel = d.in_ch * d.kernel * d.kernel;
        if (smallest < 0 || per_channel < smallest) smallest = per_channel;
      }
    if (smallest < 0) throw ConfigError("plan has no body convolutions");
    if (k_req > smallest)
      throw ConfigError("random selector k=" + std::to_string(k_req) +
                        " exceeds the smallest per-channel kernel size " +
                        std::to_string(smallest));
  }

  for (const auto& d : plan.layers) {
    auto add_entry = [&](const std::string& suffix, ParamGroup group, size_t numel,
                         bool group_selected) {
      mask.names.push_back(d.name + suffix);
      mask.groups.push_back(group);
      mask.bits.emplace_back(numel, (sel.all || group_selected) ? 1 : 0);
    };

    switch (d.kind) {
      case LayerKind::conv: {
        const size_t numel =
            static_cast<size_t>(d.out_ch) * d.in_ch * d.kernel * d.kernel;
        const bool group_on = d.group == ParamGroup::shortcut ? sel.shortcut : sel.body;
        add_entry("/kernel", d.group, numel, group_on);

        // Random selection applies to body conv kernels only; moot when the
        // whole body group is already trainable.
        if (d.group == ParamGroup::body && k_req > 0 && !sel.all && !sel.body) {
          auto& bits = mask.bits.back();
          const size_t per_channel = static_cast<size_t>(d.in_ch) * d.kernel * d.kernel;
          if (sel.random_per_channel_k > 0) {
            for (int co = 0; co < d.out_ch; ++co) {
              // Draw k distinct positions per output channel.
              std::vector<size_t> chosen;
              while (static_cast<int>(chosen.size()) < sel.random_per_channel_k) {
                const size_t pos = rng.next_below(per_channel);
                if (std::find(chosen.begin(), chosen.end(), pos) == chosen.end())
                  chosen.push_back(pos);
              }
              for (size_t pos : chosen)
                bits[static_cast<size_t>(co) * per_channel + pos] = 1;
            }
          } else {
            // Scattered variant: k * out_ch positions anywhere in the kernel.
            const size_t want =
                std::min(static_cast<size_t>(sel.random_scattered_k) * d.out_ch, numel);
            size_t marked = 0;
            while (marked < want) {
              const size_t pos = rng.next_below(numel);
              if (!bits[pos]) {
                bits[pos] = 1;
                ++marked;
              }
            }
          }
        }
        if (d.conv_bias)
          add_entry("/bias", d.group, static_cast<size_t>(d.out_ch),
                    d.group == ParamGroup::shortcut ? sel.shortcut : sel.body);
        break;
      }
      case LayerKind::batchnorm:
        add_entry("/gamma", ParamGroup::batchnorm, static_cast<size_t>(d.out_ch), sel.batchnorm);
        add_entry("/beta", ParamGroup::batchnorm, static_cast<size_t>(d.out_ch), sel.batchnorm);
        break;
      case LayerKind::linear:
        add_entry("/weight", ParamGroup::output,
                  static_cast<size_t>(d.out_features) * d.in_features, sel.output);
        add_entry("/bias", ParamGroup::output, static_cast<size_t>(d.out_features), sel.output);
        break;
      default:
        break;
    }
  }

  for (const auto& b : mask.bits) {
    mask.total += static_cast<long long>(b.size());
    for (uint8_t v : b) mask.trainable += v;
  }
  if (mask.trainable == 0)
    throw ConfigError("selector '" + mask.selector + "' marks no parameter trainable");
  return mask;
}

void apply_mask(std::vector<ParamRef>& params, const TrainabilityMask& mask) {
  if (params.size() != mask.bits.size())
    throw Error("apply_mask: mask has " + std::to_string(mask.bits.size()) +
                " entries for " + std::to_string(params.size()) + " parameters");
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i].tensor;
    const auto& bits = mask.bits[i];
    if (bits.size() != t.numel())
      throw Error("apply_mask: shape mismatch on " + params[i].name);
    if (!t.grad_allocated()) continue;
    if (t.dtype() == Dtype::f32) {
      float* g = t.grad<float>();
      for (size_t j = 0; j < bits.size(); ++j)
        if (!bits[j]) g[j] = 0.0f;
    } else {
      double* g = t.grad<double>();
      for (size_t j = 0; j < bits.size(); ++j)
        if (!bits[j]) g[j] = 0.0;
    }
  }
}

void apply_mask_to_requires_grad(Network& net, const TrainabilityMask& mask) {
  auto& params = net.parameters();
  if (params.size() != mask.bits.size())
    throw Error("mask does not match network parameter list");
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != mask.names[i])
      throw Error("mask order mismatch: " + params[i].name + " vs " + mask.names[i]);
    // Fully frozen tensors opt out of gradient computation; partially
    // trainable ones still need the full gradient, gated by apply_mask.
    params[i].tensor.set_requires_grad(!mask.fully_frozen(i));
  }
}

FrozenCheck verify_frozen(const std::vector<ParamRef>& before,
                          const std::vector<ParamRef>& after, const TrainabilityMask& mask) {
  FrozenCheck res;
  if (before.size() != after.size())
    throw UsageError("verify_frozen: parameter lists differ in length");
  for (size_t i = 0; i < before.size(); ++i) {
    if (before[i].name != after[i].name)
      throw UsageError("verify_frozen: parameter order mismatch at " + before[i].name);
    const auto* bits = mask.find(before[i].name);
    if (!bits) throw UsageError("verify_frozen: mask has no entry for " + before[i].name);
    const Tensor& a = before[i].tensor;
    const Tensor& b = after[i].tensor;
    if (a.shape() != b.shape() || a.dtype() != b.dtype())
      throw UsageError("verify_frozen: tensor " + before[i].name + " changed shape or dtype");

    bool frozen_violated = false;
    bool trainable_changed = false;
    for (size_t j = 0; j < a.numel(); ++j) {
      // Bit-exact comparison through the raw payload.
      const bool same =
          a.dtype() == Dtype::f32
              ? std::memcmp(static_cast<const char*>(a.raw_data()) + 4 * j,
                            static_cast<const char*>(b.raw_data()) + 4 * j, 4) == 0
              : std::memcmp(static_cast<const char*>(a.raw_data()) + 8 * j,
                            static_cast<const char*>(b.raw_data()) + 8 * j, 8) == 0;
      if ((*bits)[j]) {
        res.trainable_params += 1;
        if (!same) {
          trainable_changed = true;
          res.changed_trainable_values += 1;
          res.max_abs_delta_trainable = std::max(
              res.max_abs_delta_trainable, std::fabs(a.value_at(j) - b.value_at(j)));
        }
      } else {
        res.frozen_params += 1;
        if (!same) frozen_violated = true;
      }
    }
    if (frozen_violated) res.violations.push_back(before[i].name);
    if (trainable_changed) res.changed.push_back(before[i].name);
  }
  return res;
}

}  // namespace bnlab
