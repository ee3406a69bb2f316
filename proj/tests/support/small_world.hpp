#pragma once

// A small synthetic city carried through ingest, graph, tokenizer and corpus
// with fast settings, for tests of the later stages.

#include "kgrec/corpus.hpp"
#include "kgrec/ingest.hpp"
#include "kgrec/kg.hpp"
#include "kgrec/rgcn.hpp"
#include "kgrec/synth.hpp"
#include "kgrec/tokenizer.hpp"

#include <vector>

namespace kgrec::testing {

struct SmallWorld {
  std::vector<CheckInEvent> events;
  DatasetSplit split;
  Catalog catalog;
  KnowledgeGraph graph;
  StruIdTable table;
  std::vector<UserTimeline> timelines;
  Corpus corpus;
  std::array<int, kEntityTypes> counts{};
};

inline SmallWorld small_world(int users = 8, int days = 4, int window = 4, std::uint64_t seed = 7) {
  SmallWorld w;
  CityOptions city;
  city.users = users;
  city.pois = 40;
  city.categories = 4;
  city.grid_side = 2;
  city.days = days;
  city.seed = seed;
  w.events = synthetic_city(city);
  w.split = split_chronological(w.events);
  w.catalog = build_catalog(w.events, assign_regions(w.events, 3));
  w.graph = build_kg(w.split, w.catalog, 0.2);
  TokenizerConfig tc;
  tc.rgcn = {2, 8};
  tc.levels = 2;
  tc.codebook_size = {4, 4, 2, 2};
  tc.epochs = 3;
  tc.triples_per_step = 256;
  tc.seed = seed;
  auto trained = train_tokenizer(w.graph, tc);
  const nn::Matrix enc = encode_values(RelationalAdjacency(w.graph), trained.model.rgcn);
  w.table = assign_struids(enc, w.graph, trained.model.codebooks);
  w.timelines = build_timelines(w.split, w.catalog);
  w.corpus = build_corpus(w.timelines, w.catalog, w.table, CorpusOptions{window, seed});
  for (EntityType t : kAllEntityTypes) w.counts[static_cast<std::size_t>(t)] = w.graph.count(t);
  return w;
}

}  // namespace kgrec::testing
