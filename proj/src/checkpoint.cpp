#include "bnlab/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace bnlab {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'B', 'N', 'L', 'B'};
constexpr uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written little-endian; big-endian hosts need a swap pass");

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw FormatError("checkpoint truncated");
  return v;
}

uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 8)) throw FormatError("checkpoint truncated");
  return v;
}

json arch_to_json(const ArchSpec& a) {
  return json{{"family", family_name(a.family)},
              {"depth", a.depth},
              {"width", a.width.str()},
              {"feature_init", feature_init_name(a.feature_init)},
              {"bn_init", bn_init_name(a.bn_init)}};
}

ArchSpec arch_from_json(const json& j) {
  ArchSpec a;
  a.family = family_parse(j.at("family").get<std::string>());
  a.depth = j.at("depth").get<int>();
  a.width = WidthScale::parse(j.at("width").get<std::string>());
  a.feature_init = feature_init_parse(j.at("feature_init").get<std::string>());
  a.bn_init = bn_init_parse(j.at("bn_init").get<std::string>());
  return a;
}

json hp_to_json(const Hyperparams& hp) {
  json sched = json::array();
  for (auto& [e, m] : hp.schedule) sched.push_back(json{{"epoch", e}, {"multiplier", m}});
  return json{{"epochs", hp.epochs},
              {"batch_size", hp.batch_size},
              {"base_lr", hp.base_lr},
              {"momentum", hp.momentum},
              {"weight_decay", hp.weight_decay},
              {"schedule", sched},
              {"warmup_epochs", hp.warmup_epochs},
              {"seed_init", hp.seed_init},
              {"seed_data", hp.seed_data},
              {"seed_augment", hp.seed_augment}};
}

Hyperparams hp_from_json(const json& j) {
  Hyperparams hp;
  hp.epochs = j.at("epochs").get<int>();
  hp.batch_size = j.at("batch_size").get<int>();
  hp.base_lr = j.at("base_lr").get<double>();
  hp.momentum = j.at("momentum").get<double>();
  hp.weight_decay = j.at("weight_decay").get<double>();
  hp.schedule.clear();
  for (auto& s : j.at("schedule"))
    hp.schedule.emplace_back(s.at("epoch").get<int>(), s.at("multiplier").get<double>());
  hp.warmup_epochs = j.at("warmup_epochs").get<double>();
  hp.seed_init = j.at("seed_init").get<uint64_t>();
  hp.seed_data = j.at("seed_data").get<uint64_t>();
  hp.seed_augment = j.at("seed_augment").get<uint64_t>();
  return hp;
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

std::vector<ParamRef> Checkpoint::param_refs() const {
  std::vector<ParamRef> out;
  for (const auto& t : tensors)
    if (!t.is_buffer) out.push_back({t.name, t.group, t.tensor, -1});
  return out;
}

Checkpoint checkpoint_from(const Network& net, const CheckpointMeta& meta) {
  Checkpoint ck;
  ck.meta = meta;
  ck.meta.total_params = count_params(net.plan()).total;
  for (const auto& p : net.parameters())
    ck.tensors.push_back({p.name, p.group, false, p.tensor.clone()});
  for (const auto& b : net.buffers())
    ck.tensors.push_back({b.name, ParamGroup::none, true, b.tensor.clone()});
  return ck;
}

Network network_from(const Checkpoint& ckpt, Dtype dt) {
  if (ckpt.meta.bn_eps <= 0)
    throw FormatError("checkpoint has non-positive normalization eps");
  if (ckpt.meta.bn_momentum <= 0 || ckpt.meta.bn_momentum > 1)
    throw FormatError("checkpoint has statistics momentum outside (0, 1]");
  LayerPlan plan = make_plan(ckpt.meta.arch);
  Network net = Network::allocate(plan, dt);
  for (auto* st : net.bn_states()) {
    st->eps = ckpt.meta.bn_eps;
    st->momentum = ckpt.meta.bn_momentum;
  }

  auto load_into = [&](const std::string& name, Tensor dst) {
    const NamedTensor* src = ckpt.find(name);
    if (!src) throw FormatError("checkpoint is missing tensor " + name);
    if (src->tensor.shape() != dst.shape())
      throw FormatError("checkpoint tensor " + name + " has shape " +
                        shape_str(src->tensor.shape()) + ", expected " + shape_str(dst.shape()));
    for (size_t i = 0; i < dst.numel(); ++i) dst.set_value(i, src->tensor.value_at(i));
    // Same-dtype loads must be bit-exact, not value-rounded.
    if (src->tensor.dtype() == dst.dtype())
      std::memcpy(dst.raw_data(), src->tensor.raw_data(), dst.raw_size());
  };

  for (const auto& p : net.parameters()) load_into(p.name, p.tensor);
  for (const auto& b : net.buffers()) load_into(b.name, b.tensor);
  if (ckpt.meta.bn_stats_ready) net.mark_stats_ready();
  return net;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["arch"] = arch_to_json(ckpt.meta.arch);
  manifest["plan"] = plan_manifest(make_plan(ckpt.meta.arch));
  manifest["bn"] = json{{"eps", ckpt.meta.bn_eps},
                        {"momentum", ckpt.meta.bn_momentum},
                        {"stats_ready", ckpt.meta.bn_stats_ready}};
  manifest["mask"] = json{{"selector", ckpt.meta.selector},
                          {"seed", ckpt.meta.mask_seed},
                          {"trainable", ckpt.meta.trainable_count},
                          {"total", ckpt.meta.total_params}};
  manifest["hyperparams"] = hp_to_json(ckpt.meta.hp);
  manifest["epoch"] = ckpt.meta.epoch;
  json tlist = json::array();
  for (const auto& t : ckpt.tensors) {
    json shape = json::array();
    for (int d : t.tensor.shape()) shape.push_back(d);
    tlist.push_back(json{{"name", t.name},
                         {"group", param_group_name(t.group)},
                         {"buffer", t.is_buffer},
                         {"dtype", dtype_name(t.tensor.dtype())},
                         {"shape", shape}});
  }
  manifest["tensors"] = tlist;
  const std::string text = manifest.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint: " + tmp);
    os.write(kMagic, 4);
    write_u32(os, kFormatVersion);
    write_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    write_u64(os, ckpt.tensors.size());
    for (const auto& t : ckpt.tensors) {
      write_u64(os, t.name.size());
      os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      write_u32(os, t.tensor.dtype() == Dtype::f32 ? 0u : 1u);
      write_u32(os, static_cast<uint32_t>(t.tensor.rank()));
      for (int d : t.tensor.shape()) write_u64(os, static_cast<uint64_t>(d));
      os.write(static_cast<const char*>(t.tensor.raw_data()),
               static_cast<std::streamsize>(t.tensor.raw_size()));
    }
    if (!os) throw IoError("write failed for checkpoint: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot move checkpoint into place: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);

  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad magic bytes: " + path + " is not a checkpoint");
  const uint32_t version = read_u32(is);
  if (version != kFormatVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " in " +
                      path);

  const uint64_t manifest_len = read_u64(is);
  std::string text(manifest_len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(manifest_len)))
    throw FormatError("checkpoint truncated in manifest: " + path);
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint manifest is not valid structured text: " +
                      std::string(e.what()));
  }

  Checkpoint ck;
  ck.meta.version = static_cast<int>(version);
  ck.meta.arch = arch_from_json(manifest.at("arch"));
  // The embedded plan must agree with what the architecture fields rebuild.
  {
    const auto expect = plan_manifest(make_plan(ck.meta.arch));
    const auto& got = manifest.at("plan");
    if (got.size() != expect.size())
      throw FormatError("checkpoint plan manifest has " + std::to_string(got.size()) +
                        " layers, architecture implies " + std::to_string(expect.size()));
    for (size_t i = 0; i < expect.size(); ++i)
      if (got.at(i).get<std::string>() != expect[i])
        throw FormatError("checkpoint plan manifest disagrees at layer " + std::to_string(i) +
                          ": '" + got.at(i).get<std::string>() + "' vs '" + expect[i] + "'");
  }
  ck.meta.bn_eps = manifest.at("bn").at("eps").get<double>();
  ck.meta.bn_momentum = manifest.at("bn").at("momentum").get<double>();
  ck.meta.bn_stats_ready = manifest.at("bn").at("stats_ready").get<bool>();
  ck.meta.selector = manifest.at("mask").at("selector").get<std::string>();
  ck.meta.mask_seed = manifest.at("mask").at("seed").get<uint64_t>();
  ck.meta.trainable_count = manifest.at("mask").at("trainable").get<long long>();
  ck.meta.total_params = manifest.at("mask").at("total").get<long long>();
  ck.meta.hp = hp_from_json(manifest.at("hyperparams"));
  ck.meta.epoch = manifest.at("epoch").get<int>();

  const auto& tlist = manifest.at("tensors");
  const uint64_t count = read_u64(is);
  if (count != tlist.size())
    throw FormatError("tensor count mismatch: file has " + std::to_string(count) +
                      ", manifest lists " + std::to_string(tlist.size()));

  for (uint64_t i = 0; i < count; ++i) {
    const uint64_t name_len = read_u64(is);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(name_len)))
      throw FormatError("checkpoint truncated in tensor name");
    const uint32_t dtype_tag = read_u32(is);
    if (dtype_tag > 1) throw FormatError("unknown dtype tag for tensor " + name);
    const Dtype dt = dtype_tag == 0 ? Dtype::f32 : Dtype::f64;
    const uint32_t rank = read_u32(is);
    std::vector<int> shape(rank);
    for (uint32_t r = 0; r < rank; ++r) shape[r] = static_cast<int>(read_u64(is));

    const auto& entry = tlist.at(i);
    if (entry.at("name").get<std::string>() != name)
      throw FormatError("tensor order mismatch: file has '" + name + "', manifest expects '" +
                        entry.at("name").get<std::string>() + "'");
    std::vector<int> expect;
    for (const auto& d : entry.at("shape")) expect.push_back(d.get<int>());
    if (expect != shape)
      throw FormatError("shape mismatch for tensor " + name + ": file " + shape_str(shape) +
                        ", manifest " + shape_str(expect));

    NamedTensor t;
    t.name = name;
    t.is_buffer = entry.at("buffer").get<bool>();
    const std::string g = entry.at("group").get<std::string>();
    t.group = g == "batchnorm"  ? ParamGroup::batchnorm
              : g == "output"   ? ParamGroup::output
              : g == "shortcut" ? ParamGroup::shortcut
              : g == "body"     ? ParamGroup::body
                                : ParamGroup::none;
    t.tensor = Tensor::zeros(shape, dt);
    if (!is.read(static_cast<char*>(t.tensor.raw_data()),
                 static_cast<std::streamsize>(t.tensor.raw_size())))
      throw FormatError("checkpoint truncated in tensor payload of " + name);
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

}  // namespace bnlab
