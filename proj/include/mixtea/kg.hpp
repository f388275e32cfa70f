#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mixtea {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
};

struct EntityMapping {
  EntityId source = 0;
  EntityId target = 0;

  friend bool operator==(const EntityMapping&, const EntityMapping&) = default;
};

// Bidirectional URI <-> dense id table. Ids are handed out in first-insertion order.
class UriTable {
 public:
  std::uint32_t intern(std::string_view uri);
  // Throws DatasetError naming the URI when absent.
  std::uint32_t at(std::string_view uri) const;
  bool contains(std::string_view uri) const;
  const std::string& uri(std::uint32_t id) const { return uris_.at(id); }
  std::size_t size() const { return uris_.size(); }
  const std::vector<std::string>& uris() const { return uris_; }

 private:
  std::vector<std::string> uris_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

// Compressed list-of-lists: entry i owns indices[offsets[i] .. offsets[i+1]).
struct Segments {
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> indices;

  std::size_t count() const { return offsets.size() - 1; }
  std::size_t size(std::size_t i) const { return offsets[i + 1] - offsets[i]; }
  std::size_t begin(std::size_t i) const { return offsets[i]; }
  std::size_t end(std::size_t i) const { return offsets[i + 1]; }

  static Segments from_lists(const std::vector<std::vector<std::size_t>>& lists);
};

struct KnowledgeGraph {
  std::string name;
  std::vector<std::string> entity_uris;
  std::vector<Triple> triples;
  // Undirected adjacency, duplicates collapsed, sorted, self-loop included.
  std::vector<std::vector<EntityId>> neighbor_index;
  // Relation ids where the entity is head / tail; duplicates kept.
  std::vector<std::vector<RelationId>> out_relations;
  std::vector<std::vector<RelationId>> in_relations;

  std::size_t entity_count() const { return entity_uris.size(); }
};

struct ParsedTriples {
  std::vector<Triple> triples;
  UriTable entities;
};

// Reads `head<TAB>relation<TAB>tail` lines. Entity ids are local to the file;
// relation ids are interned into `relations`, which may be shared across KGs.
ParsedTriples parse_triples(const std::filesystem::path& path, UriTable& relations);
ParsedTriples parse_triples(const std::filesystem::path& path);

// Reads `source_uri<TAB>target_uri` lines; order and duplicates are preserved.
std::vector<EntityMapping> parse_links(const std::filesystem::path& path,
                                       const UriTable& source_entities,
                                       const UriTable& target_entities);

KnowledgeGraph build_knowledge_graph(std::string name, ParsedTriples parsed,
                                     std::size_t relation_count);

// Writes triples back as URI lines.
void write_triples(const std::filesystem::path& path, const KnowledgeGraph& kg,
                   const UriTable& relations);

// Joint index over both KGs. Source entities occupy [0, source_count), target
// entities [source_count, source_count + target_count).
struct GraphIndex {
  std::size_t entity_count = 0;
  std::size_t relation_count = 0;
  Segments neighbors;
  Segments out_relations;
  Segments in_relations;
};

struct AlignmentDataset {
  KnowledgeGraph source_kg;
  KnowledgeGraph target_kg;
  UriTable relations;
  std::vector<EntityMapping> train;
  std::vector<EntityMapping> valid;
  std::vector<EntityMapping> test;
  std::vector<EntityId> unlabeled_source;
  std::vector<EntityId> unlabeled_target;
  GraphIndex index;

  std::size_t source_count() const { return source_kg.entity_count(); }
  std::size_t target_count() const { return target_kg.entity_count(); }
  std::size_t relation_count() const { return relations.size(); }
  // Row of a target-KG entity in the joint embedding matrix.
  std::size_t global_target(EntityId t) const { return source_count() + t; }
};

enum class Split { train, valid, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);
const std::vector<EntityMapping>& mappings_for(const AlignmentDataset& dataset, Split split);

// Composes a dataset from already parsed pieces; validates split disjointness.
AlignmentDataset assemble_dataset(KnowledgeGraph source, KnowledgeGraph target, UriTable relations,
                                  std::vector<EntityMapping> train,
                                  std::vector<EntityMapping> valid,
                                  std::vector<EntityMapping> test);

// Loads an OpenEA V1 directory: rel_triples_1, rel_triples_2, 721_5fold/<fold>/.
AlignmentDataset build_dataset(const std::filesystem::path& dir, int fold);

GraphIndex build_graph_index(const KnowledgeGraph& source, const KnowledgeGraph& target,
                             std::size_t relation_count);

}  // namespace mixtea
