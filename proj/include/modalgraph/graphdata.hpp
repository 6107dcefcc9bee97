#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "modalgraph/fem.hpp"
#include "modalgraph/population.hpp"
#include "modalgraph/sensing.hpp"

namespace modalgraph {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Container file format (version 1)
//
//   line 1   "MODALGRAPH-CONTAINER 1"
//   line 2   decimal byte length L of the header
//   L bytes  JSON header: {"kind", "meta", "blocks": [{"name", "section",
//            "count", "graph"}...], "checksums": {graph id: crc32}}
//   body     for every block, in header order: uint64 little-endian element
//            count followed by count IEEE-754 float64 values, little-endian
//
// Integer payloads (edges, masks, supports) are stored as exact float64.
// Checksums are CRC-32 over the body bytes (count prefix + payload) of every
// block belonging to the same graph id, in order.
// ---------------------------------------------------------------------------

inline constexpr int kContainerVersion = 1;

struct Block {
  std::string name;
  std::string section;  // "inputs", "reference", "params", ...
  std::int64_t graph = -1;
  std::vector<double> data;
};

struct Container {
  std::string kind;
  Json meta = Json::object();
  std::vector<Block> blocks;

  const Block* find(const std::string& name) const;
  const Block& at(const std::string& name) const;
};

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

enum class Split { train, validation, test };

const char* split_name(Split s);
Split parse_split(const std::string& s);

struct SplitFractions {
  double train = 0.80;
  double validation = 0.05;
  double test = 0.15;
};

struct SplitCounts {
  int train = 0;
  int validation = 0;
  int test = 0;
};

// Largest-remainder rounding; ties go to the earlier split.
SplitCounts split_counts(int total, const SplitFractions& f);

// Deterministic seeded assignment of split tags to graph positions.
std::vector<Split> assign_splits(int total, const SplitFractions& f, std::uint64_t seed);

struct GraphRecord {
  std::int64_t id = 0;
  TrussSpec truss;
  Split split = Split::train;
  std::optional<TimeHistory> raw;  // after `simulate`
  std::optional<SignalSet> signals;  // after `sense`
};

struct DatasetManifest;
class Dataset;
DatasetManifest save(const Dataset& data, const std::string& path);

// One population: graphs plus their held-out modal references. Reference reads
// go through an audited accessor so tests can prove training never touches them.
class Dataset {
 public:
  std::uint64_t population_seed = 0;
  TrapezoidSpec boundary;
  SplitFractions fractions;
  Json provenance = Json::object();  // stage parameters recorded by the pipeline
  std::vector<GraphRecord> graphs;

  Dataset() = default;
  Dataset(const Dataset& other);
  Dataset& operator=(const Dataset& other);
  Dataset(Dataset&&) noexcept;
  Dataset& operator=(Dataset&&) noexcept;

  std::size_t size() const { return graphs.size(); }
  bool has_reference(std::size_t i) const { return i < references_.size() && references_[i].has_value(); }
  const ModalReference& reference(std::size_t i) const;
  void set_reference(std::size_t i, ModalReference ref);

  std::uint64_t reference_reads() const { return reference_reads_.load(); }
  void reset_reference_audit() { reference_reads_ = 0; }

  std::vector<std::size_t> indices(Split s) const;
  SplitCounts counts() const;

 private:
  friend DatasetManifest save(const Dataset& data, const std::string& path);

  std::vector<std::optional<ModalReference>> references_;
  mutable std::atomic<std::uint64_t> reference_reads_{0};
};

struct DatasetManifest {
  std::uint64_t population_seed = 0;
  TrapezoidSpec boundary;
  SplitCounts counts;
  int schema_version = kContainerVersion;
  std::vector<std::pair<std::int64_t, std::uint32_t>> checksums;

  Json to_json() const;
};

DatasetManifest save(const Dataset& data, const std::string& path);
Dataset load(const std::string& path);
// Header-only read: no payload is materialised.
Json inspect(const std::string& path);

// Model outputs for a set of graphs, keyed by graph id.
struct DecompositionRecord {
  std::int64_t id = 0;
  Matrix modal_responses;  // P x T
  Matrix mode_shapes;      // N x P
  double fs_hz = 200.0;
};

struct DecompositionSet {
  std::string variant = "full";
  std::vector<DecompositionRecord> records;
};

void save_decomposition(const DecompositionSet& d, const std::string& path);
DecompositionSet load_decomposition(const std::string& path);

Json boundary_to_json(const TrapezoidSpec& b);
TrapezoidSpec boundary_from_json(const Json& j);

}  // namespace modalgraph
