#include "jointcast/core/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace jointcast {

namespace {

constexpr char kMagic[] = "JCKPT1";
constexpr std::size_t kMagicLen = 6;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& is, const std::filesystem::path& path) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw ParseError(path.string() + ": truncated checkpoint");
  return v;
}

struct Record {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

template <typename Scalar>
std::vector<float> to_f32(const Matrix<Scalar>& m) {
  std::vector<float> v(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.size(); ++i) v[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
  return v;
}

}  // namespace

template <typename Scalar>
void save_checkpoint(const ParameterStore<Scalar>& store, const std::filesystem::path& path) {
  std::vector<Record> records;
  for (const auto& e : store.entries()) {
    records.push_back({e.name, e.value.shape, to_f32<Scalar>(e.value.data)});
    records.push_back({e.name + ".m1", e.value.shape, to_f32<Scalar>(e.m1)});
    records.push_back({e.name + ".m2", e.value.shape, to_f32<Scalar>(e.m2)});
  }
  records.push_back({"adam.step", {1}, {static_cast<float>(store.step())}});

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint " + tmp);
    os.write(kMagic, kMagicLen);
    put_u32(os, static_cast<std::uint32_t>(records.size()));
    for (const auto& r : records) {
      put_u32(os, static_cast<std::uint32_t>(r.name.size()));
      os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
      put_u32(os, static_cast<std::uint32_t>(r.shape.size()));
      for (Index e : r.shape) put_u32(os, static_cast<std::uint32_t>(e));
    }
    for (const auto& r : records) {
      os.write(reinterpret_cast<const char*>(r.values.data()), static_cast<std::streamsize>(r.values.size() * 4));
    }
    if (!os) throw IoError("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

template <typename Scalar>
ParameterStore<Scalar> load_checkpoint(const std::filesystem::path& path, std::uint64_t rng_seed) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[kMagicLen];
  if (!is.read(magic, kMagicLen) || std::memcmp(magic, kMagic, kMagicLen) != 0) {
    throw ParseError(path.string() + ": not a JCKPT1 checkpoint");
  }
  const std::uint32_t count = get_u32(is, path);
  std::vector<Record> records(count);
  for (auto& r : records) {
    const std::uint32_t len = get_u32(is, path);
    r.name.resize(len);
    if (!is.read(r.name.data(), len)) throw ParseError(path.string() + ": truncated manifest");
    const std::uint32_t rank = get_u32(is, path);
    for (std::uint32_t i = 0; i < rank; ++i) r.shape.push_back(static_cast<Index>(get_u32(is, path)));
  }
  for (auto& r : records) {
    r.values.resize(static_cast<std::size_t>(shape_size(r.shape)));
    if (!is.read(reinterpret_cast<char*>(r.values.data()), static_cast<std::streamsize>(r.values.size() * 4))) {
      throw ParseError(path.string() + ": truncated payload for '" + r.name + "'");
    }
  }

  auto fill = [](Matrix<Scalar>& m, const Record& r) {
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(r.values[static_cast<std::size_t>(i)]);
  };
  ParameterStore<Scalar> store(rng_seed);
  std::vector<const Record*> moments;
  for (const auto& r : records) {
    const bool is_moment = r.name.size() > 3 && (r.name.ends_with(".m1") || r.name.ends_with(".m2"));
    if (r.name == "adam.step") {
      store.set_step(static_cast<std::int64_t>(r.values.at(0)));
    } else if (is_moment) {
      moments.push_back(&r);
    } else {
      fill(store.add(r.name, r.shape).data, r);
    }
  }
  for (const Record* r : moments) {
    const std::string base = r->name.substr(0, r->name.size() - 3);
    auto& e = store.entry(base);
    if (e.value.shape != r->shape) throw ParseError(path.string() + ": moment shape mismatch for '" + base + "'");
    fill(r->name.ends_with(".m1") ? e.m1 : e.m2, *r);
  }
  return store;
}

template <typename Scalar>
void require_same_layout(const ParameterStore<Scalar>& expected, const ParameterStore<Scalar>& loaded) {
  if (expected.size() != loaded.size()) {
    throw ConfigError("checkpoint has " + std::to_string(loaded.size()) + " parameters, configuration expects " +
                      std::to_string(expected.size()));
  }
  for (const auto& e : expected.entries()) {
    if (!loaded.contains(e.name)) throw ConfigError("checkpoint is missing parameter '" + e.name + "'");
    const auto& got = loaded.at(e.name).shape;
    if (got != e.value.shape) {
      throw ConfigError("parameter '" + e.name + "' has shape " + shape_string(got) + " in checkpoint, configuration expects " +
                        shape_string(e.value.shape));
    }
  }
}

template void save_checkpoint<float>(const ParameterStore<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const ParameterStore<double>&, const std::filesystem::path&);
template ParameterStore<float> load_checkpoint<float>(const std::filesystem::path&, std::uint64_t);
template ParameterStore<double> load_checkpoint<double>(const std::filesystem::path&, std::uint64_t);
template void require_same_layout<float>(const ParameterStore<float>&, const ParameterStore<float>&);
template void require_same_layout<double>(const ParameterStore<double>&, const ParameterStore<double>&);

}  // namespace jointcast
