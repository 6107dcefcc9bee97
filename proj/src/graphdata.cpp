#include "modalgraph/graphdata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <zlib.h>

namespace modalgraph {

namespace {

constexpr const char* kMagic = "MODALGRAPH-CONTAINER";

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return v;
}

std::string encode_block(const Block& b) {
  std::string out;
  out.reserve(8 * (b.data.size() + 1));
  put_u64(out, b.data.size());
  for (double d : b.data) put_u64(out, std::bit_cast<std::uint64_t>(d));
  return out;
}

std::vector<double> flatten(const Matrix& m) {
  std::vector<double> out(m.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i * m.cols() + j] = m(i, j);
  return out;
}

Matrix unflatten(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols,
                 const std::string& what) {
  if (static_cast<Eigen::Index>(v.size()) != rows * cols)
    throw FormatError("container: block " + what + " has unexpected size");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = v[i * cols + j];
  return m;
}

std::string graph_key(std::int64_t id, const char* field) {
  return "graph/" + std::to_string(id) + "/" + field;
}

}  // namespace

const Block* Container::find(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return &b;
  return nullptr;
}

const Block& Container::at(const std::string& name) const {
  const Block* b = find(name);
  if (!b) throw FormatError("container: missing block '" + name + "'");
  return *b;
}

void write_container(const std::string& path, const Container& c) {
  Json header;
  header["kind"] = c.kind;
  header["version"] = kContainerVersion;
  header["meta"] = c.meta;
  header["blocks"] = Json::array();
  std::map<std::int64_t, uLong> crc;
  std::string body;
  for (const auto& b : c.blocks) {
    header["blocks"].push_back(
        {{"name", b.name}, {"section", b.section}, {"count", b.data.size()}, {"graph", b.graph}});
    const std::string bytes = encode_block(b);
    auto [it, fresh] = crc.try_emplace(b.graph, crc32(0L, Z_NULL, 0));
    it->second = crc32(it->second, reinterpret_cast<const Bytef*>(bytes.data()),
                       static_cast<uInt>(bytes.size()));
    body += bytes;
  }
  header["checksums"] = Json::object();
  for (const auto& [g, v] : crc) header["checksums"][std::to_string(g)] = static_cast<std::uint32_t>(v);

  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("container: cannot open '" + path + "' for writing");
  out << kMagic << ' ' << kContainerVersion << '\n' << text.size() << '\n' << text;
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw Error("container: write to '" + path + "' failed");
}

namespace {

Json read_header(std::ifstream& in, const std::string& path) {
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (!in || magic != kMagic) throw FormatError("container: '" + path + "' is not a modalgraph container");
  if (version != kContainerVersion) {
    throw FormatError("container: unsupported schema version " + std::to_string(version) +
                      " (expected " + std::to_string(kContainerVersion) + ")");
  }
  std::size_t len = 0;
  in >> len;
  in.get();
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("container: truncated header in '" + path + "'");
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw FormatError(std::string("container: malformed header: ") + e.what());
  }
}

}  // namespace

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("container: cannot open '" + path + "'");
  const Json header = read_header(in, path);
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(body.data());
  const std::size_t n = body.size();

  Container c;
  c.kind = header.at("kind").get<std::string>();
  c.meta = header.value("meta", Json::object());
  std::map<std::int64_t, uLong> crc;
  std::size_t off = 0;
  for (const auto& jb : header.at("blocks")) {
    Block b;
    b.name = jb.at("name").get<std::string>();
    b.section = jb.at("section").get<std::string>();
    b.graph = jb.at("graph").get<std::int64_t>();
    const std::uint64_t count = jb.at("count").get<std::uint64_t>();
    const std::size_t bytes = 8 * (count + 1);
    if (off + bytes > n || (off + 8 <= n && get_u64(p + off) != count)) {
      throw FormatError("container: checksum failure for graph " + std::to_string(b.graph) +
                        " (block '" + b.name + "' truncated or corrupt)");
    }
    auto [it, fresh] = crc.try_emplace(b.graph, crc32(0L, Z_NULL, 0));
    it->second = crc32(it->second, p + off, static_cast<uInt>(bytes));
    b.data.resize(count);
    for (std::uint64_t k = 0; k < count; ++k) b.data[k] = std::bit_cast<double>(get_u64(p + off + 8 * (k + 1)));
    off += bytes;
    c.blocks.push_back(std::move(b));
  }
  const Json& sums = header.at("checksums");
  for (const auto& [g, v] : crc) {
    const std::string key = std::to_string(g);
    if (!sums.contains(key) || sums.at(key).get<std::uint32_t>() != static_cast<std::uint32_t>(v))
      throw FormatError("container: checksum failure for graph " + key);
  }
  return c;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw FormatError("unknown split tag '" + s + "'");
}

SplitCounts split_counts(int total, const SplitFractions& f) {
  require(total >= 1, "split: population must be non-empty");
  require(f.train >= 0.0 && f.validation >= 0.0 && f.test >= 0.0, "split: fractions must be >= 0");
  require(std::abs(f.train + f.validation + f.test - 1.0) < 1e-9, "split: fractions must sum to 1");
  const std::array<double, 3> frac{f.train, f.validation, f.test};
  std::array<int, 3> n{};
  std::array<double, 3> rem{};
  int assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = frac[k] * total;
    n[k] = static_cast<int>(std::floor(exact + 1e-9));
    rem[k] = exact - n[k];
    assigned += n[k];
  }
  while (assigned < total) {
    int best = 0;
    for (int k = 1; k < 3; ++k)
      if (rem[k] > rem[best] + 1e-12) best = k;
    ++n[best];
    rem[best] = -1.0;
    ++assigned;
  }
  for (int k = 0; k < 3; ++k)
    if (frac[k] > 0.0 && n[k] == 0)
      throw InvalidArgument("split: nonzero fraction produced an empty split");
  return {n[0], n[1], n[2]};
}

std::vector<Split> assign_splits(int total, const SplitFractions& f, std::uint64_t seed) {
  const SplitCounts c = split_counts(total, f);
  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (int i = total - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<Split> out(total, Split::train);
  for (int k = 0; k < total; ++k) {
    Split s = Split::train;
    if (k >= c.train) s = Split::validation;
    if (k >= c.train + c.validation) s = Split::test;
    out[order[k]] = s;
  }
  return out;
}

Dataset::Dataset(const Dataset& o)
    : population_seed(o.population_seed),
      boundary(o.boundary),
      fractions(o.fractions),
      provenance(o.provenance),
      graphs(o.graphs),
      references_(o.references_) {}

Dataset& Dataset::operator=(const Dataset& o) {
  if (this != &o) {
    population_seed = o.population_seed;
    boundary = o.boundary;
    fractions = o.fractions;
    provenance = o.provenance;
    graphs = o.graphs;
    references_ = o.references_;
    reference_reads_ = 0;
  }
  return *this;
}

Dataset::Dataset(Dataset&& o) noexcept
    : population_seed(o.population_seed),
      boundary(o.boundary),
      fractions(o.fractions),
      provenance(std::move(o.provenance)),
      graphs(std::move(o.graphs)),
      references_(std::move(o.references_)),
      reference_reads_(o.reference_reads_.load()) {}

Dataset& Dataset::operator=(Dataset&& o) noexcept {
  population_seed = o.population_seed;
  boundary = o.boundary;
  fractions = o.fractions;
  provenance = std::move(o.provenance);
  graphs = std::move(o.graphs);
  references_ = std::move(o.references_);
  reference_reads_ = o.reference_reads_.load();
  return *this;
}

const ModalReference& Dataset::reference(std::size_t i) const {
  if (!has_reference(i)) throw InvalidArgument("dataset: graph has no modal reference (run simulate)");
  ++reference_reads_;
  return *references_[i];
}

void Dataset::set_reference(std::size_t i, ModalReference ref) {
  require(i < graphs.size(), "dataset: reference index out of range");
  references_.resize(graphs.size());
  references_[i] = std::move(ref);
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < graphs.size(); ++i)
    if (graphs[i].split == s) out.push_back(i);
  return out;
}

SplitCounts Dataset::counts() const {
  SplitCounts c;
  for (const auto& g : graphs) {
    if (g.split == Split::train) ++c.train;
    if (g.split == Split::validation) ++c.validation;
    if (g.split == Split::test) ++c.test;
  }
  return c;
}

Json boundary_to_json(const TrapezoidSpec& b) {
  return {{"span_m", b.span_m},
          {"top_span_m", b.top_span_m},
          {"height_m", b.height_m},
          {"n_boundary_points", b.n_boundary_points},
          {"n_interior_min", b.n_interior_min},
          {"n_interior_max", b.n_interior_max},
          {"min_spacing_m", b.min_spacing_m},
          {"min_angle_deg", b.min_angle_deg},
          {"max_attempts", b.max_attempts}};
}

TrapezoidSpec boundary_from_json(const Json& j) {
  TrapezoidSpec b;
  b.span_m = j.value("span_m", b.span_m);
  b.top_span_m = j.value("top_span_m", b.top_span_m);
  b.height_m = j.value("height_m", b.height_m);
  b.n_boundary_points = j.value("n_boundary_points", b.n_boundary_points);
  b.n_interior_min = j.value("n_interior_min", b.n_interior_min);
  b.n_interior_max = j.value("n_interior_max", b.n_interior_max);
  b.min_spacing_m = j.value("min_spacing_m", b.min_spacing_m);
  b.min_angle_deg = j.value("min_angle_deg", b.min_angle_deg);
  b.max_attempts = j.value("max_attempts", b.max_attempts);
  return b;
}

Json DatasetManifest::to_json() const {
  Json j;
  j["schema_version"] = schema_version;
  j["population_seed"] = population_seed;
  j["boundary"] = boundary_to_json(boundary);
  j["counts"] = {{"train", counts.train}, {"validation", counts.validation}, {"test", counts.test},
                 {"total", counts.train + counts.validation + counts.test}};
  j["checksums"] = Json::object();
  for (const auto& [id, crc] : checksums) j["checksums"][std::to_string(id)] = crc;
  return j;
}

DatasetManifest save(const Dataset& data, const std::string& path) {
  Container c;
  c.kind = "dataset";
  Json graphs = Json::array();
  std::vector<Block> reference_blocks;
  for (std::size_t i = 0; i < data.graphs.size(); ++i) {
    const GraphRecord& g = data.graphs[i];
    const TrussSpec& t = g.truss;
    Json jg{{"id", g.id},
            {"split", split_name(g.split)},
            {"nodes", t.node_count()},
            {"youngs_modulus_pa", t.youngs_modulus_pa},
            {"density_kg_m3", t.density_kg_m3},
            {"area_m2", t.area_m2},
            {"units", {{"coords", "m"}, {"raw", "m/s^2"}, {"signals", "dimensionless"}}}};
    std::vector<double> xy, edges, supports;
    for (const auto& p : t.nodes) {
      xy.push_back(p.x);
      xy.push_back(p.y);
    }
    for (const auto& [a, b] : t.edges) {
      edges.push_back(a);
      edges.push_back(b);
    }
    for (const auto& s : t.supports) {
      supports.push_back(s.node);
      supports.push_back(s.fixed_x ? 1.0 : 0.0);
      supports.push_back(s.fixed_y ? 1.0 : 0.0);
    }
    c.blocks.push_back({graph_key(g.id, "coords"), "inputs", g.id, std::move(xy)});
    c.blocks.push_back({graph_key(g.id, "edges"), "inputs", g.id, std::move(edges)});
    c.blocks.push_back({graph_key(g.id, "supports"), "inputs", g.id, std::move(supports)});
    if (g.raw) {
      jg["raw"] = {{"steps", g.raw->steps()},
                   {"dt_s", g.raw->dt_s},
                   {"excitation_cutoff_step", g.raw->excitation_cutoff_step}};
      c.blocks.push_back({graph_key(g.id, "raw"), "inputs", g.id, flatten(g.raw->accelerations)});
    }
    if (g.signals) {
      jg["signals"] = {{"length", g.signals->length()},
                       {"fs_hz", g.signals->fs_hz},
                       {"normalization_scale", g.signals->normalization_scale}};
      c.blocks.push_back({graph_key(g.id, "signals"), "inputs", g.id, flatten(g.signals->signals)});
      c.blocks.push_back({graph_key(g.id, "mask"), "inputs", g.id,
                          std::vector<double>(g.signals->mask.begin(), g.signals->mask.end())});
    }
    if (data.has_reference(i)) {
      // Serialisation is not a training read; bypass the audited accessor.
      const ModalReference& r = *data.references_[i];
      jg["reference"] = {{"modes", r.mode_count()},
                         {"rayleigh_alpha", r.rayleigh_alpha},
                         {"rayleigh_beta", r.rayleigh_beta}};
      const std::int64_t rid = -1000 - g.id;
      reference_blocks.push_back({graph_key(g.id, "ref_frequencies"), "reference", rid, r.frequencies_hz});
      reference_blocks.push_back({graph_key(g.id, "ref_damping"), "reference", rid, r.damping_ratios});
      reference_blocks.push_back({graph_key(g.id, "ref_shapes"), "reference", rid, flatten(r.mode_shapes)});
    }
    graphs.push_back(std::move(jg));
  }
  // The reference section follows every input block.
  for (auto& b : reference_blocks) c.blocks.push_back(std::move(b));

  const SplitCounts counts = data.counts();
  c.meta = {{"population_seed", data.population_seed},
            {"boundary", boundary_to_json(data.boundary)},
            {"fractions", {data.fractions.train, data.fractions.validation, data.fractions.test}},
            {"counts", {{"train", counts.train}, {"validation", counts.validation}, {"test", counts.test}}},
            {"provenance", data.provenance},
            {"graphs", graphs}};
  write_container(path, c);

  DatasetManifest m;
  m.population_seed = data.population_seed;
  m.boundary = data.boundary;
  m.counts = counts;
  const Json header = inspect(path);
  for (const auto& [k, v] : header.at("checksums").items()) {
    const std::int64_t id = std::stoll(k);
    if (id >= 0) m.checksums.emplace_back(id, v.get<std::uint32_t>());
  }
  std::sort(m.checksums.begin(), m.checksums.end());
  return m;
}

Dataset load(const std::string& path) {
  const Container c = read_container(path);
  if (c.kind != "dataset") throw FormatError("load: '" + path + "' holds a " + c.kind + ", not a dataset");
  Dataset d;
  d.population_seed = c.meta.at("population_seed").get<std::uint64_t>();
  d.boundary = boundary_from_json(c.meta.at("boundary"));
  const auto fr = c.meta.at("fractions");
  d.fractions = {fr.at(0).get<double>(), fr.at(1).get<double>(), fr.at(2).get<double>()};
  d.provenance = c.meta.value("provenance", Json::object());
  const Json& graphs = c.meta.at("graphs");
  d.graphs.reserve(graphs.size());
  std::vector<std::pair<std::size_t, ModalReference>> refs;
  for (const auto& jg : graphs) {
    GraphRecord g;
    g.id = jg.at("id").get<std::int64_t>();
    g.split = parse_split(jg.at("split").get<std::string>());
    TrussSpec& t = g.truss;
    const int n = jg.at("nodes").get<int>();
    t.youngs_modulus_pa = jg.at("youngs_modulus_pa").get<double>();
    t.density_kg_m3 = jg.at("density_kg_m3").get<double>();
    t.area_m2 = jg.at("area_m2").get<double>();
    t.population_id = g.id;
    const auto& xy = c.at(graph_key(g.id, "coords")).data;
    if (static_cast<int>(xy.size()) != 2 * n) throw FormatError("load: coordinate block size mismatch");
    for (int i = 0; i < n; ++i) t.nodes.push_back({xy[2 * i], xy[2 * i + 1]});
    const auto& e = c.at(graph_key(g.id, "edges")).data;
    for (std::size_t k = 0; k + 1 < e.size(); k += 2)
      t.edges.emplace_back(static_cast<int>(e[k]), static_cast<int>(e[k + 1]));
    const auto& s = c.at(graph_key(g.id, "supports")).data;
    for (std::size_t k = 0; k + 2 < s.size(); k += 3)
      t.supports.push_back({static_cast<int>(s[k]), s[k + 1] != 0.0, s[k + 2] != 0.0});
    if (jg.contains("raw")) {
      TimeHistory h;
      h.dt_s = jg["raw"].at("dt_s").get<double>();
      h.excitation_cutoff_step = jg["raw"].at("excitation_cutoff_step").get<int>();
      h.accelerations = unflatten(c.at(graph_key(g.id, "raw")).data, n, jg["raw"].at("steps").get<int>(),
                                  graph_key(g.id, "raw"));
      g.raw = std::move(h);
    }
    if (jg.contains("signals")) {
      SignalSet sig;
      sig.fs_hz = jg["signals"].at("fs_hz").get<double>();
      sig.normalization_scale = jg["signals"].at("normalization_scale").get<double>();
      sig.signals = unflatten(c.at(graph_key(g.id, "signals")).data, n,
                              jg["signals"].at("length").get<int>(), graph_key(g.id, "signals"));
      const auto& m = c.at(graph_key(g.id, "mask")).data;
      sig.mask.assign(m.size(), 0);
      for (std::size_t k = 0; k < m.size(); ++k) sig.mask[k] = m[k] != 0.0 ? 1 : 0;
      g.signals = std::move(sig);
    }
    if (jg.contains("reference")) {
      ModalReference r;
      r.rayleigh_alpha = jg["reference"].at("rayleigh_alpha").get<double>();
      r.rayleigh_beta = jg["reference"].at("rayleigh_beta").get<double>();
      r.frequencies_hz = c.at(graph_key(g.id, "ref_frequencies")).data;
      r.damping_ratios = c.at(graph_key(g.id, "ref_damping")).data;
      const int modes = jg["reference"].at("modes").get<int>();
      r.mode_shapes = unflatten(c.at(graph_key(g.id, "ref_shapes")).data, n, modes, graph_key(g.id, "ref_shapes"));
      refs.emplace_back(d.graphs.size(), std::move(r));
    }
    d.graphs.push_back(std::move(g));
  }
  for (auto& [i, r] : refs) d.set_reference(i, std::move(r));
  return d;
}

Json inspect(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("inspect: cannot open '" + path + "'");
  return read_header(in, path);
}

void save_decomposition(const DecompositionSet& d, const std::string& path) {
  Container c;
  c.kind = "decomposition";
  Json recs = Json::array();
  for (const auto& r : d.records) {
    recs.push_back({{"id", r.id},
                    {"P", r.modal_responses.rows()},
                    {"T", r.modal_responses.cols()},
                    {"N", r.mode_shapes.rows()},
                    {"fs_hz", r.fs_hz}});
    c.blocks.push_back({graph_key(r.id, "Q"), "outputs", r.id, flatten(r.modal_responses)});
    c.blocks.push_back({graph_key(r.id, "Phi"), "outputs", r.id, flatten(r.mode_shapes)});
  }
  c.meta = {{"variant", d.variant}, {"records", recs}};
  write_container(path, c);
}

DecompositionSet load_decomposition(const std::string& path) {
  const Container c = read_container(path);
  if (c.kind != "decomposition")
    throw FormatError("load_decomposition: '" + path + "' holds a " + c.kind);
  DecompositionSet d;
  d.variant = c.meta.value("variant", std::string("full"));
  for (const auto& jr : c.meta.at("records")) {
    DecompositionRecord r;
    r.id = jr.at("id").get<std::int64_t>();
    r.fs_hz = jr.at("fs_hz").get<double>();
    const int P = jr.at("P").get<int>(), T = jr.at("T").get<int>(), N = jr.at("N").get<int>();
    r.modal_responses = unflatten(c.at(graph_key(r.id, "Q")).data, P, T, "Q");
    r.mode_shapes = unflatten(c.at(graph_key(r.id, "Phi")).data, N, P, "Phi");
    d.records.push_back(std::move(r));
  }
  return d;
}

}  // namespace modalgraph
