#include "lfdnet/checkpoint.hpp"

#include <sstream>

#include "binary_io.hpp"
#include "lfdnet/error.hpp"

namespace lfdnet {

namespace {

constexpr char kMagic[] = "LFDN";
constexpr char kTrailer[] = "LFDE";
constexpr std::uint8_t kDtypeF32 = 1;

void put_tensor(detail::ByteWriter& w, const std::string& name, const Tensor<float>& t) {
  w.put_string(name);
  w.put(kDtypeF32);
  w.put(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.put(static_cast<std::uint64_t>(d));
  w.put_array(t.values());
}

struct TensorRecord {
  std::string name;
  Tensor<float> tensor;
};

TensorRecord get_tensor(detail::ByteReader& r) {
  TensorRecord rec;
  rec.name = r.get_string(4096);
  if (r.get<std::uint8_t>() != kDtypeF32) throw FormatError("bad checkpoint: unsupported dtype in " + rec.name);
  const auto rank = r.get<std::uint32_t>();
  if (rank > 8) throw FormatError("bad checkpoint: rank out of range in " + rec.name);
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    const auto v = r.get<std::uint64_t>();
    if (v > (1ull << 32)) throw FormatError("bad checkpoint: dimension out of range in " + rec.name);
    d = static_cast<std::size_t>(v);
    count *= v;
  }
  if (count * sizeof(float) > r.remaining()) throw FormatError("truncated");
  rec.tensor = Tensor<float>(shape);
  r.get_array(rec.tensor.values());
  return rec;
}

void put_adam(detail::ByteWriter& w, const nn::AdamState<float>& a, const std::vector<nn::Param<float>>& params) {
  w.put(a.config.learning_rate);
  w.put(a.config.beta1);
  w.put(a.config.beta2);
  w.put(a.config.epsilon);
  w.put(static_cast<std::int64_t>(a.step));
  w.put(static_cast<std::uint32_t>(a.m.size()));
  for (std::size_t i = 0; i < a.m.size(); ++i) {
    put_tensor(w, "m:" + params.at(i).name, a.m[i]);
    put_tensor(w, "v:" + params.at(i).name, a.v[i]);
  }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(Network& net, const TrainingState& state) {
  detail::ByteWriter w;
  w.put_bytes(std::string_view(kMagic, 4));
  w.put(kCheckpointVersion);
  w.put_string(net.spec().to_text());

  const auto tensors = net.state();
  w.put(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) put_tensor(w, t.name, *t.tensor);

  const auto params = net.params();
  if (!state.adam.m.empty() && state.adam.m.size() != params.size())
    throw InvalidArgument("optimizer state does not match the network parameters");
  put_adam(w, state.adam, params);

  w.put(static_cast<std::uint32_t>(state.epoch));
  std::ostringstream rng;
  rng << net.dropout_rng();
  w.put_string(rng.str());

  w.put(static_cast<std::uint32_t>(state.class_weights.size()));
  for (double c : state.class_weights.weights) w.put(c);

  w.put(static_cast<std::uint32_t>(state.history.size()));
  for (const auto& m : state.history) {
    w.put(static_cast<std::int32_t>(m.epoch));
    w.put(m.train_loss);
    w.put(m.train_accuracy);
    w.put(m.test_loss);
    w.put(m.test_accuracy);
  }
  w.put_bytes(std::string_view(kTrailer, 4));
  return std::move(w.bytes());
}

void save_checkpoint(Network& net, const TrainingState& state, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(net, state);
  detail::write_file_bytes(path.string(), bytes);
}

namespace {

ArchSpec read_header(detail::ByteReader& r) {
  if (r.remaining() < 4 || r.get_bytes(4) != std::string_view(kMagic, 4)) throw FormatError("bad checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError("version mismatch: checkpoint has " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  try {
    return ArchSpec::from_text(r.get_string());
  } catch (const FormatError& e) {
    throw FormatError(std::string("bad checkpoint: ") + e.what());
  }
}

void read_body(detail::ByteReader& r, Network& net, TrainingState* state) {
  auto tensors = net.state();
  const auto count = r.get<std::uint32_t>();
  if (count != tensors.size()) throw FormatError("spec mismatch: tensor count differs");
  // Decode everything before touching the network so a failure leaves it intact.
  std::vector<Tensor<float>> values;
  values.reserve(count);
  for (const auto& t : tensors) {
    auto rec = get_tensor(r);
    if (rec.name != t.name || rec.tensor.shape() != t.tensor->shape())
      throw FormatError("spec mismatch: tensor " + rec.name + " " + shape_string(rec.tensor.shape()) +
                        " does not match " + t.name + " " + shape_string(t.tensor->shape()));
    values.push_back(std::move(rec.tensor));
  }

  TrainingState st;
  st.adam.config.learning_rate = r.get<double>();
  st.adam.config.beta1 = r.get<double>();
  st.adam.config.beta2 = r.get<double>();
  st.adam.config.epsilon = r.get<double>();
  st.adam.step = r.get<std::int64_t>();
  const auto moments = r.get<std::uint32_t>();
  const auto params = net.params();
  if (moments != 0 && moments != params.size()) throw FormatError("spec mismatch: optimizer state size");
  for (std::uint32_t i = 0; i < moments; ++i) {
    auto m = get_tensor(r);
    auto v = get_tensor(r);
    if (m.name != "m:" + params[i].name || v.name != "v:" + params[i].name ||
        m.tensor.shape() != params[i].value->shape() || v.tensor.shape() != params[i].value->shape())
      throw FormatError("spec mismatch: optimizer state for " + params[i].name);
    st.adam.m.push_back(std::move(m.tensor));
    st.adam.v.push_back(std::move(v.tensor));
  }
  st.epoch = static_cast<int>(r.get<std::uint32_t>());
  std::istringstream rng_text(r.get_string());
  std::mt19937_64 rng;
  if (!(rng_text >> rng)) throw FormatError("bad checkpoint: rng state");

  const auto k = r.get<std::uint32_t>();
  if (k > 1u << 20) throw FormatError("bad checkpoint: class weight count");
  for (std::uint32_t i = 0; i < k; ++i) st.class_weights.weights.push_back(r.get<double>());

  const auto epochs = r.get<std::uint32_t>();
  if (epochs > 1u << 20) throw FormatError("bad checkpoint: history length");
  for (std::uint32_t i = 0; i < epochs; ++i) {
    EpochMetrics m;
    m.epoch = r.get<std::int32_t>();
    m.train_loss = r.get<double>();
    m.train_accuracy = r.get<double>();
    m.test_loss = r.get<double>();
    m.test_accuracy = r.get<double>();
    st.history.push_back(m);
  }
  if (r.remaining() < 4 || r.get_bytes(4) != std::string_view(kTrailer, 4)) throw FormatError("bad checkpoint: trailer");
  if (r.remaining() != 0) throw FormatError("bad checkpoint: trailing bytes");

  for (std::size_t i = 0; i < tensors.size(); ++i) *tensors[i].tensor = std::move(values[i]);
  net.dropout_rng() = rng;
  if (state) *state = std::move(st);
}

}  // namespace

void decode_checkpoint_into(std::span<const std::uint8_t> bytes, Network& net, TrainingState* state) {
  detail::ByteReader r(bytes);
  if (read_header(r) != net.spec()) throw FormatError("spec mismatch");
  read_body(r, net, state);
}

LoadedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  auto spec = read_header(r);
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad checkpoint: ") + e.what());
  }
  LoadedCheckpoint out{Network(std::move(spec), 0), {}};
  read_body(r, out.net, &out.state);
  return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path.string());
  return decode_checkpoint(bytes);
}

void load_checkpoint_into(const std::filesystem::path& path, Network& net, TrainingState* state) {
  const auto bytes = detail::read_file_bytes(path.string());
  decode_checkpoint_into(bytes, net, state);
}

}  // namespace lfdnet
