#include "mixtea/kg.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

namespace mixtea {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  return in;
}

std::string where(const std::filesystem::path& path, std::size_t line_no) {
  return path.string() + ":" + std::to_string(line_no);
}

}  // namespace

std::uint32_t UriTable::intern(std::string_view uri) {
  auto key = std::string(uri);
  auto it = ids_.find(key);
  if (it != ids_.end()) return it->second;
  const auto id = static_cast<std::uint32_t>(uris_.size());
  uris_.push_back(key);
  ids_.emplace(std::move(key), id);
  return id;
}

std::uint32_t UriTable::at(std::string_view uri) const {
  auto it = ids_.find(std::string(uri));
  if (it == ids_.end()) throw DatasetError("unknown URI: " + std::string(uri));
  return it->second;
}

bool UriTable::contains(std::string_view uri) const {
  return ids_.count(std::string(uri)) > 0;
}

Segments Segments::from_lists(const std::vector<std::vector<std::size_t>>& lists) {
  Segments seg;
  seg.offsets.reserve(lists.size() + 1);
  for (const auto& list : lists) {
    seg.indices.insert(seg.indices.end(), list.begin(), list.end());
    seg.offsets.push_back(seg.indices.size());
  }
  return seg;
}

ParsedTriples parse_triples(const std::filesystem::path& path, UriTable& relations) {
  auto in = open_input(path);
  ParsedTriples out;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = strip_cr(raw);
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      throw ParseError(where(path, line_no) + ": expected 3 tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    Triple t;
    t.head = out.entities.intern(fields[0]);
    t.relation = relations.intern(fields[1]);
    t.tail = out.entities.intern(fields[2]);
    out.triples.push_back(t);
  }
  if (out.triples.empty()) throw ParseError(path.string() + ": no triples");
  return out;
}

ParsedTriples parse_triples(const std::filesystem::path& path) {
  UriTable relations;
  return parse_triples(path, relations);
}

std::vector<EntityMapping> parse_links(const std::filesystem::path& path,
                                       const UriTable& source_entities,
                                       const UriTable& target_entities) {
  auto in = open_input(path);
  std::vector<EntityMapping> links;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = strip_cr(raw);
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 2) {
      throw ParseError(where(path, line_no) + ": expected 2 tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    if (!source_entities.contains(fields[0])) {
      throw DatasetError(where(path, line_no) + ": unknown source URI " + std::string(fields[0]));
    }
    if (!target_entities.contains(fields[1])) {
      throw DatasetError(where(path, line_no) + ": unknown target URI " + std::string(fields[1]));
    }
    links.push_back({source_entities.at(fields[0]), target_entities.at(fields[1])});
  }
  return links;
}

KnowledgeGraph build_knowledge_graph(std::string name, ParsedTriples parsed,
                                     std::size_t relation_count) {
  KnowledgeGraph kg;
  kg.name = std::move(name);
  kg.entity_uris = parsed.entities.uris();
  kg.triples = std::move(parsed.triples);
  const auto n = kg.entity_uris.size();
  kg.neighbor_index.assign(n, {});
  kg.out_relations.assign(n, {});
  kg.in_relations.assign(n, {});
  for (const auto& t : kg.triples) {
    if (t.head >= n || t.tail >= n || t.relation >= relation_count) {
      throw DatasetError(kg.name + ": triple references an unknown id");
    }
    kg.neighbor_index[t.head].push_back(t.tail);
    kg.neighbor_index[t.tail].push_back(t.head);
    kg.out_relations[t.head].push_back(t.relation);
    kg.in_relations[t.tail].push_back(t.relation);
  }
  for (EntityId e = 0; e < n; ++e) {
    auto& nb = kg.neighbor_index[e];
    nb.push_back(e);
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return kg;
}

void write_triples(const std::filesystem::path& path, const KnowledgeGraph& kg,
                   const UriTable& relations) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot write " + path.string());
  for (const auto& t : kg.triples) {
    out << kg.entity_uris[t.head] << '\t' << relations.uri(t.relation) << '\t'
        << kg.entity_uris[t.tail] << '\n';
  }
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "valid") return Split::valid;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split: " + std::string(name));
}

const std::vector<EntityMapping>& mappings_for(const AlignmentDataset& dataset, Split split) {
  switch (split) {
    case Split::train: return dataset.train;
    case Split::valid: return dataset.valid;
    case Split::test: return dataset.test;
  }
  return dataset.test;
}

GraphIndex build_graph_index(const KnowledgeGraph& source, const KnowledgeGraph& target,
                             std::size_t relation_count) {
  GraphIndex index;
  const auto ns = source.entity_count();
  index.entity_count = ns + target.entity_count();
  index.relation_count = relation_count;

  std::vector<std::vector<std::size_t>> neighbors, outs, ins;
  neighbors.reserve(index.entity_count);
  auto append = [&](const KnowledgeGraph& kg, std::size_t offset) {
    for (std::size_t e = 0; e < kg.entity_count(); ++e) {
      std::vector<std::size_t> nb;
      nb.reserve(kg.neighbor_index[e].size());
      for (auto j : kg.neighbor_index[e]) nb.push_back(j + offset);
      neighbors.push_back(std::move(nb));
      outs.emplace_back(kg.out_relations[e].begin(), kg.out_relations[e].end());
      ins.emplace_back(kg.in_relations[e].begin(), kg.in_relations[e].end());
    }
  };
  append(source, 0);
  append(target, ns);
  index.neighbors = Segments::from_lists(neighbors);
  index.out_relations = Segments::from_lists(outs);
  index.in_relations = Segments::from_lists(ins);
  return index;
}

AlignmentDataset assemble_dataset(KnowledgeGraph source, KnowledgeGraph target, UriTable relations,
                                  std::vector<EntityMapping> train,
                                  std::vector<EntityMapping> valid,
                                  std::vector<EntityMapping> test) {
  AlignmentDataset ds;
  ds.source_kg = std::move(source);
  ds.target_kg = std::move(target);
  ds.relations = std::move(relations);
  ds.train = std::move(train);
  ds.valid = std::move(valid);
  ds.test = std::move(test);

  const auto ns = ds.source_count();
  const auto nt = ds.target_count();
  // Owner split of every entity on each side; 0 = unassigned.
  std::vector<int> src_owner(ns, 0), tgt_owner(nt, 0);
  auto claim = [&](const std::vector<EntityMapping>& links, int tag, std::string_view name) {
    for (const auto& m : links) {
      if (m.source >= ns || m.target >= nt) {
        throw DatasetError(std::string(name) + " mapping references an unknown entity");
      }
      if (src_owner[m.source] != 0 && src_owner[m.source] != tag) {
        throw DatasetError("splits overlap on source entity " + ds.source_kg.entity_uris[m.source]);
      }
      if (tgt_owner[m.target] != 0 && tgt_owner[m.target] != tag) {
        throw DatasetError("splits overlap on target entity " + ds.target_kg.entity_uris[m.target]);
      }
      src_owner[m.source] = tag;
      tgt_owner[m.target] = tag;
    }
  };
  claim(ds.train, 1, "train");
  claim(ds.valid, 2, "valid");
  claim(ds.test, 3, "test");

  for (EntityId e = 0; e < ns; ++e) {
    if (src_owner[e] != 1) ds.unlabeled_source.push_back(e);
  }
  for (EntityId e = 0; e < nt; ++e) {
    if (tgt_owner[e] != 1) ds.unlabeled_target.push_back(e);
  }
  ds.index = build_graph_index(ds.source_kg, ds.target_kg, ds.relations.size());
  return ds;
}

AlignmentDataset build_dataset(const std::filesystem::path& dir, int fold) {
  namespace fs = std::filesystem;
  if (fold < 1) throw DatasetError("fold index must be >= 1, got " + std::to_string(fold));
  const auto fold_dir = dir / "721_5fold" / std::to_string(fold);
  if (!fs::is_directory(fold_dir)) {
    throw DatasetError("fold " + std::to_string(fold) + " not found: " + fold_dir.string());
  }
  for (const auto& p : {dir / "rel_triples_1", dir / "rel_triples_2", fold_dir / "train_links",
                        fold_dir / "valid_links", fold_dir / "test_links"}) {
    if (!fs::is_regular_file(p)) throw DatasetError("missing file " + p.string());
  }

  UriTable relations;
  auto src = parse_triples(dir / "rel_triples_1", relations);
  auto tgt = parse_triples(dir / "rel_triples_2", relations);
  auto train = parse_links(fold_dir / "train_links", src.entities, tgt.entities);
  auto valid = parse_links(fold_dir / "valid_links", src.entities, tgt.entities);
  auto test = parse_links(fold_dir / "test_links", src.entities, tgt.entities);

  const auto nrel = relations.size();
  auto source = build_knowledge_graph("source", std::move(src), nrel);
  auto target = build_knowledge_graph("target", std::move(tgt), nrel);
  return assemble_dataset(std::move(source), std::move(target), std::move(relations),
                          std::move(train), std::move(valid), std::move(test));
}

}  // namespace mixtea
