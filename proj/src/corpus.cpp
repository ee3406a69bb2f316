#include "kgrec/corpus.hpp"

#include "kgrec/error.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <unordered_map>

namespace kgrec {

namespace {
constexpr std::array<std::string_view, 3> kTaskNames = {"poi", "category", "region"};
constexpr std::array<std::string_view, 3> kSplitNames = {"train", "valid", "test"};
constexpr std::array<std::string_view, kSpecialCount> kSpecialNames = {
    "<PAD>",      "<BOS>",      "<EOS>",  "<SEP>",  "<TASK_POI>", "<TASK_CAT>",
    "<TASK_REG>", "<USER>",     "<PREF>", "<HIST>", "<TIME>",     "<TARGET>"};
constexpr std::array<std::string_view, 7> kAblationNames = {
    "full", "wo_struid", "wo_reg", "wo_cat", "wo_regcat", "wo_pref", "wo_seq"};
constexpr std::array<std::string_view, 7> kAblationLabels = {
    "full", "w/o StruID", "w/o Reg", "w/o Cat", "w/o RegCat", "w/o Pref", "w/o Seq"};

int task_token(Task t) {
  switch (t) {
    case Task::poi:
      return static_cast<int>(Special::task_poi);
    case Task::category:
      return static_cast<int>(Special::task_cat);
    case Task::region:
      return static_cast<int>(Special::task_reg);
  }
  return 0;
}
}  // namespace

std::string_view to_string(Task t) { return kTaskNames[static_cast<std::size_t>(t)]; }

Task task_from(std::string_view name) {
  for (std::size_t i = 0; i < kTaskNames.size(); ++i) {
    if (kTaskNames[i] == name) return static_cast<Task>(i);
  }
  throw DataError("unknown task '" + std::string(name) + "'");
}

EntityType target_type(Task t) {
  switch (t) {
    case Task::poi:
      return EntityType::poi;
    case Task::category:
      return EntityType::category;
    case Task::region:
      return EntityType::region;
  }
  return EntityType::poi;
}

std::string_view to_string(SplitPart s) { return kSplitNames[static_cast<std::size_t>(s)]; }

std::string_view to_string(Ablation a) { return kAblationNames[static_cast<std::size_t>(a)]; }

Ablation ablation_from(std::string_view name) {
  for (std::size_t i = 0; i < kAblationNames.size(); ++i) {
    if (kAblationNames[i] == name || kAblationLabels[i] == name) return static_cast<Ablation>(i);
  }
  throw ConfigError("unknown ablation variant '" + std::string(name) + "'");
}

int time_bucket(std::int64_t timestamp) {
  const std::int64_t day = timestamp >= 0 ? timestamp / 86400 : (timestamp - 86399) / 86400;
  const auto hour = static_cast<int>((timestamp - day * 86400) / 3600);
  // 1970-01-01 was a Thursday; weekday 0 = Sunday.
  const auto weekday = static_cast<int>(((day + 4) % 7 + 7) % 7);
  const int weekend = (weekday == 0 || weekday == 6) ? 1 : 0;
  return weekend * 24 + hour;
}

// ---- vocabulary -----------------------------------------------------------

Vocabulary Vocabulary::structural(int levels, const std::array<int, kEntityTypes>& codebook_sizes,
                                  const std::array<int, kEntityTypes>& disambiguators) {
  Vocabulary v;
  v.mode_ = Mode::structural;
  v.levels_ = levels;
  v.sizes_ = codebook_sizes;
  v.disamb_ = disambiguators;
  int at = kSpecialCount + kTimeBuckets;
  for (std::size_t t = 0; t < kEntityTypes; ++t) {
    v.code_base_[t] = at;
    at += levels * codebook_sizes[t];
  }
  for (std::size_t t = 0; t < kEntityTypes; ++t) {
    v.disamb_base_[t] = at;
    at += disambiguators[t];
  }
  v.size_ = at;
  return v;
}

Vocabulary Vocabulary::flat(const std::array<int, kEntityTypes>& entity_counts) {
  Vocabulary v;
  v.mode_ = Mode::flat;
  v.levels_ = 1;
  v.sizes_ = entity_counts;
  int at = kSpecialCount + kTimeBuckets;
  for (std::size_t t = 0; t < kEntityTypes; ++t) {
    v.code_base_[t] = at;
    at += entity_counts[t];
    v.disamb_base_[t] = at;
  }
  v.size_ = at;
  return v;
}

int Vocabulary::time_token(int bucket) const {
  if (bucket < 0 || bucket >= kTimeBuckets) throw ContractError("time bucket out of range");
  return kSpecialCount + bucket;
}

int Vocabulary::code_token(EntityType t, int level, int index) const {
  const auto ti = static_cast<std::size_t>(t);
  if (mode_ != Mode::structural || level < 0 || level >= levels_ || index < 0 ||
      index >= sizes_[ti]) {
    throw ContractError("code token out of vocabulary bounds");
  }
  return code_base_[ti] + level * sizes_[ti] + index;
}

int Vocabulary::disambiguator_token(EntityType t, int d) const {
  const auto ti = static_cast<std::size_t>(t);
  if (mode_ != Mode::structural || d < 0 || d >= disamb_[ti]) {
    throw ContractError("disambiguator token out of vocabulary bounds");
  }
  return disamb_base_[ti] + d;
}

int Vocabulary::entity_token(EntityType t, int index) const {
  const auto ti = static_cast<std::size_t>(t);
  if (mode_ != Mode::flat || index < 0 || index >= sizes_[ti]) {
    throw ContractError("entity token out of vocabulary bounds");
  }
  return code_base_[ti] + index;
}

Vocabulary::TokenInfo Vocabulary::info(int token) const {
  using Kind = TokenInfo::Kind;
  if (token < 0 || token >= size_) throw ContractError("token " + std::to_string(token) + " out of range");
  if (token < kSpecialCount) return {Kind::special, EntityType::user, 0, token};
  if (token < kSpecialCount + kTimeBuckets) return {Kind::time, EntityType::user, 0, token - kSpecialCount};
  for (std::size_t t = 0; t < kEntityTypes; ++t) {
    const auto type = static_cast<EntityType>(t);
    if (mode_ == Mode::flat) {
      if (token < code_base_[t] + sizes_[t]) return {Kind::entity, type, 0, token - code_base_[t]};
      continue;
    }
    const int span = levels_ * sizes_[t];
    if (token >= code_base_[t] && token < code_base_[t] + span) {
      const int off = token - code_base_[t];
      return {Kind::code, type, off / sizes_[t], off % sizes_[t]};
    }
  }
  for (std::size_t t = 0; t < kEntityTypes; ++t) {
    if (token >= disamb_base_[t] && token < disamb_base_[t] + disamb_[t]) {
      return {Kind::disambiguator, static_cast<EntityType>(t), 0, token - disamb_base_[t]};
    }
  }
  throw ContractError("token " + std::to_string(token) + " has no meaning");
}

std::string Vocabulary::token_string(int token) const {
  const TokenInfo ti = info(token);
  const std::string type(to_string(ti.type));
  switch (ti.kind) {
    case TokenInfo::Kind::special:
      return std::string(kSpecialNames[static_cast<std::size_t>(ti.value)]);
    case TokenInfo::Kind::time:
      return "<T_we" + std::to_string(ti.value / 24) + "_h" + std::to_string(ti.value % 24) + ">";
    case TokenInfo::Kind::code:
      return '<' + type + '_' + std::to_string(ti.level) + '_' + std::to_string(ti.value) + '>';
    case TokenInfo::Kind::disambiguator:
      return '<' + type + "_d" + std::to_string(ti.value) + '>';
    case TokenInfo::Kind::entity:
      return '<' + type + "_e" + std::to_string(ti.value) + '>';
  }
  return {};
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json tokens = nlohmann::json::object();
  for (int i = 0; i < size_; ++i) tokens[token_string(i)] = i;
  return {{"layout",
           {{"mode", mode_ == Mode::structural ? "structural" : "flat"},
            {"levels", levels_},
            {"sizes", sizes_},
            {"disambiguators", disamb_}}},
          {"size", size_},
          {"tokens", tokens}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  const auto& lay = j.at("layout");
  const auto sizes = lay.at("sizes").get<std::array<int, kEntityTypes>>();
  if (lay.at("mode").get<std::string>() == "flat") return flat(sizes);
  return structural(lay.at("levels").get<int>(), sizes,
                    lay.at("disambiguators").get<std::array<int, kEntityTypes>>());
}

// ---- entity codec ---------------------------------------------------------

EntityCodec::EntityCodec(const Vocabulary& vocab, const StruIdTable& ids) : vocab_(vocab) {
  for (EntityType t : kAllEntityTypes) {
    const auto ti = static_cast<std::size_t>(t);
    for (std::size_t i = 0; i < ids.ids[ti].size(); ++i) {
      const StruId& id = ids.ids[ti][i];
      std::vector<int> toks;
      for (std::size_t l = 0; l < id.indices.size(); ++l) {
        toks.push_back(vocab.code_token(t, static_cast<int>(l), id.indices[l]));
      }
      if (id.disambiguator) toks.push_back(vocab.disambiguator_token(t, *id.disambiguator));
      if (!reverse_.emplace(toks, EntityRef{t, static_cast<int>(i)}).second) {
        throw DataError("two " + std::string(to_string(t)) + " entities share one structural id");
      }
      spelled_[ti].push_back(std::move(toks));
    }
  }
}

EntityCodec::EntityCodec(const Vocabulary& vocab, const std::array<int, kEntityTypes>& counts,
                         std::uint64_t seed)
    : vocab_(vocab) {
  std::mt19937_64 rng(seed);
  for (EntityType t : kAllEntityTypes) {
    const auto ti = static_cast<std::size_t>(t);
    std::vector<int> perm(static_cast<std::size_t>(counts[ti]));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < counts[ti]; ++i) {
      std::vector<int> toks{vocab.entity_token(t, perm[static_cast<std::size_t>(i)])};
      reverse_.emplace(toks, EntityRef{t, i});
      spelled_[ti].push_back(std::move(toks));
    }
  }
}

const std::vector<int>& EntityCodec::tokens(EntityRef e) const {
  return spelled_[static_cast<std::size_t>(e.type)].at(static_cast<std::size_t>(e.index));
}

std::optional<EntityRef> EntityCodec::decode(std::span<const int> tokens) const {
  auto it = reverse_.find(std::vector<int>(tokens.begin(), tokens.end()));
  if (it == reverse_.end()) return std::nullopt;
  return it->second;
}

// ---- example construction ---------------------------------------------------

std::vector<int> top5_preference(std::span<const int> train_pois) {
  std::map<int, int> counts;
  for (int p : train_pois) ++counts[p];
  std::vector<std::pair<int, int>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<int> out;
  for (std::size_t i = 0; i < ranked.size() && i < 5; ++i) out.push_back(ranked[i].first);
  return out;
}

std::vector<UserTimeline> build_timelines(const DatasetSplit& split, const Catalog& catalog) {
  std::vector<UserTimeline> out;
  out.reserve(split.users.size());
  for (const UserSequence& us : split.users) {
    UserTimeline tl;
    tl.user = catalog.user(us.user_id);
    tl.n_train = static_cast<int>(us.train.size());
    tl.n_valid = static_cast<int>(us.valid.size());
    for (const auto* part : {&us.train, &us.valid, &us.test}) {
      for (const CheckInEvent& e : *part) {
        tl.pois.push_back(catalog.poi(e.poi_id));
        tl.timestamps.push_back(e.timestamp);
      }
    }
    out.push_back(std::move(tl));
  }
  return out;
}

std::vector<ExampleSpec> build_example_specs(std::span<const UserTimeline> timelines,
                                             const Catalog& catalog, Task task, int window) {
  if (window < 1) throw ConfigError("corpus window must be >= 1");
  std::vector<ExampleSpec> out;
  for (const UserTimeline& tl : timelines) {
    std::vector<PoiTriple> pref;
    for (int p : top5_preference(std::span<const int>(tl.pois).first(
             static_cast<std::size_t>(tl.n_train)))) {
      const PoiMeta& m = catalog.poi_meta[static_cast<std::size_t>(p)];
      pref.push_back({m.category, m.region, p});
    }
    const int n = static_cast<int>(tl.pois.size());
    for (int k = 1; k < n; ++k) {
      ExampleSpec s;
      s.task = task;
      s.split = k < tl.n_train                ? SplitPart::train
                : k < tl.n_train + tl.n_valid ? SplitPart::valid
                                              : SplitPart::test;
      s.user = tl.user;
      s.position = k;
      s.preference = pref;
      for (int j = std::max(0, k - window); j < k; ++j) {
        const int p = tl.pois[static_cast<std::size_t>(j)];
        const PoiMeta& m = catalog.poi_meta[static_cast<std::size_t>(p)];
        HistoryItem item{time_bucket(tl.timestamps[static_cast<std::size_t>(j)]), -1, -1, -1};
        switch (task) {
          case Task::poi:
            item.category = m.category;
            item.region = m.region;
            item.poi = p;
            break;
          case Task::category:
            item.category = m.category;
            break;
          case Task::region:
            item.region = m.region;
            break;
        }
        s.history.push_back(item);
      }
      const int tp = tl.pois[static_cast<std::size_t>(k)];
      const PoiMeta& tm = catalog.poi_meta[static_cast<std::size_t>(tp)];
      s.target_bucket = time_bucket(tl.timestamps[static_cast<std::size_t>(k)]);
      s.target_poi = tp;
      switch (task) {
        case Task::poi:
          s.target = {EntityType::poi, tp};
          break;
        case Task::category:
          s.target = {EntityType::category, tm.category};
          break;
        case Task::region:
          s.target = {EntityType::region, tm.region};
          break;
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::size_t max_sequence_length(int levels, int window) {
  const auto id = static_cast<std::size_t>(levels + 1);
  constexpr std::size_t kFixedSpecials = 9;  // BOS TASK USER PREF SEP HIST TIME <t> TARGET
  return kFixedSpecials + id + 5 * 3 * id + static_cast<std::size_t>(window) * (1 + 3 * id) +
         id + 1;
}

namespace {

void append(std::vector<int>& out, const std::vector<int>& toks) {
  out.insert(out.end(), toks.begin(), toks.end());
}

}  // namespace

TokenSequence serialize(const ExampleSpec& spec, const EntityCodec& codec,
                        const SegmentOptions& seg, std::size_t max_len) {
  const Vocabulary& v = codec.vocab();
  TokenSequence seq;
  seq.task = spec.task;
  seq.split = spec.split;
  seq.user = {EntityType::user, spec.user};
  seq.position = spec.position;
  seq.target_poi = spec.target_poi;
  auto& in = seq.input_tokens;
  in = {v.special(Special::bos), task_token(spec.task), v.special(Special::user)};
  append(in, codec.tokens(seq.user));
  if (seg.preference) {
    in.push_back(v.special(Special::pref));
    for (const PoiTriple& p : spec.preference) {
      append(in, codec.tokens({EntityType::category, p.category}));
      append(in, codec.tokens({EntityType::region, p.region}));
      append(in, codec.tokens({EntityType::poi, p.poi}));
    }
  }
  in.push_back(v.special(Special::sep));
  if (seg.history) {
    in.push_back(v.special(Special::hist));
    for (const HistoryItem& h : spec.history) {
      in.push_back(v.time_token(h.bucket));
      if (h.category >= 0) append(in, codec.tokens({EntityType::category, h.category}));
      if (h.region >= 0) append(in, codec.tokens({EntityType::region, h.region}));
      if (h.poi >= 0) append(in, codec.tokens({EntityType::poi, h.poi}));
    }
  }
  in.push_back(v.special(Special::time));
  in.push_back(v.time_token(spec.target_bucket));
  in.push_back(v.special(Special::target));
  seq.target_tokens = codec.tokens(spec.target);
  seq.target_tokens.push_back(v.special(Special::eos));
  if (in.size() + seq.target_tokens.size() > max_len) {
    throw ContractError("serialized example of " +
                        std::to_string(in.size() + seq.target_tokens.size()) +
                        " tokens exceeds bound " + std::to_string(max_len));
  }
  return seq;
}

namespace {

class TokenReader {
 public:
  TokenReader(const std::vector<int>& toks, const EntityCodec& codec)
      : toks_(toks), codec_(codec), v_(codec.vocab()) {}

  bool done() const { return at_ >= toks_.size(); }
  int peek() const { return done() ? -1 : toks_[at_]; }

  void expect(int token, const char* what) {
    if (peek() != token) throw DataError(std::string("malformed sequence: expected ") + what);
    ++at_;
  }

  bool accept(int token) {
    if (peek() != token) return false;
    ++at_;
    return true;
  }

  bool at_time() const {
    return !done() && toks_[at_] >= kSpecialCount && toks_[at_] < kSpecialCount + kTimeBuckets;
  }

  int time() {
    if (!at_time()) throw DataError("malformed sequence: expected a time token");
    return toks_[at_++] - kSpecialCount;
  }

  /// Type of the entity id starting at the cursor, if one starts there.
  std::optional<EntityType> entity_ahead() const {
    if (done() || toks_[at_] < kSpecialCount + kTimeBuckets) return std::nullopt;
    const auto ti = v_.info(toks_[at_]);
    if (ti.kind == Vocabulary::TokenInfo::Kind::disambiguator) return std::nullopt;
    return ti.type;
  }

  EntityRef entity(EntityType want) {
    std::vector<int> id;
    const int n = v_.mode() == Vocabulary::Mode::flat ? 1 : v_.levels();
    for (int l = 0; l < n && !done(); ++l) id.push_back(toks_[at_++]);
    if (v_.mode() == Vocabulary::Mode::structural && !done() && toks_[at_] >= kSpecialCount + kTimeBuckets) {
      const auto ti = v_.info(toks_[at_]);
      if (ti.kind == Vocabulary::TokenInfo::Kind::disambiguator && ti.type == want) {
        id.push_back(toks_[at_++]);
      }
    }
    const auto e = codec_.decode(id);
    if (!e || e->type != want) {
      throw DataError("malformed sequence: expected a " + std::string(to_string(want)) + " id");
    }
    return *e;
  }

 private:
  const std::vector<int>& toks_;
  const EntityCodec& codec_;
  const Vocabulary& v_;
  std::size_t at_ = 0;
};

Task task_of_token(int token) {
  switch (static_cast<Special>(token)) {
    case Special::task_poi:
      return Task::poi;
    case Special::task_cat:
      return Task::category;
    case Special::task_reg:
      return Task::region;
    default:
      throw DataError("malformed sequence: expected a task token");
  }
}

}  // namespace

ExampleSpec detokenize(const TokenSequence& seq, const EntityCodec& codec) {
  const Vocabulary& v = codec.vocab();
  ExampleSpec spec;
  spec.split = seq.split;
  spec.position = seq.position;
  spec.target_poi = seq.target_poi;
  TokenReader in(seq.input_tokens, codec);
  in.expect(v.special(Special::bos), "<BOS>");
  spec.task = task_of_token(in.peek());
  in.expect(task_token(spec.task), "task");
  in.expect(v.special(Special::user), "<USER>");
  spec.user = in.entity(EntityType::user).index;
  if (in.accept(v.special(Special::pref))) {
    while (in.entity_ahead()) {
      PoiTriple p;
      p.category = in.entity(EntityType::category).index;
      p.region = in.entity(EntityType::region).index;
      p.poi = in.entity(EntityType::poi).index;
      spec.preference.push_back(p);
    }
  }
  in.expect(v.special(Special::sep), "<SEP>");
  if (in.accept(v.special(Special::hist))) {
    while (in.at_time()) {
      HistoryItem h{in.time(), -1, -1, -1};
      while (auto t = in.entity_ahead()) {
        const EntityRef e = in.entity(*t);
        switch (e.type) {
          case EntityType::category:
            h.category = e.index;
            break;
          case EntityType::region:
            h.region = e.index;
            break;
          case EntityType::poi:
            h.poi = e.index;
            break;
          case EntityType::user:
            throw DataError("malformed sequence: user id inside history");
        }
      }
      spec.history.push_back(h);
    }
  }
  in.expect(v.special(Special::time), "<TIME>");
  spec.target_bucket = in.time();
  in.expect(v.special(Special::target), "<TARGET>");
  if (!in.done()) throw DataError("malformed sequence: trailing input tokens");
  TokenReader out(seq.target_tokens, codec);
  spec.target = out.entity(target_type(spec.task));
  out.expect(v.special(Special::eos), "<EOS>");
  if (!out.done()) throw DataError("malformed sequence: trailing target tokens");
  return spec;
}

// ---- corpora ----------------------------------------------------------------

namespace {

Vocabulary structural_vocab(const StruIdTable& ids) {
  int levels = 0;
  std::array<int, kEntityTypes> sizes{};
  std::array<int, kEntityTypes> disamb{};
  for (EntityType t : kAllEntityTypes) {
    const auto ti = static_cast<std::size_t>(t);
    for (const StruId& id : ids.of(t)) {
      if (levels == 0) levels = static_cast<int>(id.indices.size());
      if (static_cast<int>(id.indices.size()) != levels) {
        throw DataError("structural ids of differing lengths");
      }
      for (int n : id.indices) sizes[ti] = std::max(sizes[ti], n + 1);
      if (id.disambiguator) disamb[ti] = std::max(disamb[ti], *id.disambiguator + 1);
    }
  }
  if (levels == 0) throw DataError("empty structural id table");
  return Vocabulary::structural(levels, sizes, disamb);
}

bool before(const TokenSequence& a, const TokenSequence& b) {
  if (a.user.index != b.user.index) return a.user.index < b.user.index;
  if (a.position != b.position) return a.position < b.position;
  return a.task < b.task;
}

void sort_and_shuffle(Corpus& c, std::uint64_t seed) {
  for (auto* part : {&c.train, &c.valid, &c.test}) std::sort(part->begin(), part->end(), before);
  std::mt19937_64 rng(seed);
  std::shuffle(c.train.begin(), c.train.end(), rng);
}

std::vector<TokenSequence>& part_of(Corpus& c, SplitPart s) {
  switch (s) {
    case SplitPart::train:
      return c.train;
    case SplitPart::valid:
      return c.valid;
    case SplitPart::test:
      return c.test;
  }
  return c.train;
}

const std::vector<TokenSequence>& part_of(const Corpus& c, SplitPart s) {
  return part_of(const_cast<Corpus&>(c), s);
}

}  // namespace

Corpus build_corpus(std::span<const UserTimeline> timelines, const Catalog& catalog,
                    const StruIdTable& ids, const CorpusOptions& opt) {
  Corpus c;
  c.vocab = structural_vocab(ids);
  c.window = opt.window;
  c.max_len = max_sequence_length(c.vocab.levels(), opt.window);
  const EntityCodec codec(c.vocab, ids);
  for (Task task : kAllTasks) {
    for (const ExampleSpec& spec : build_example_specs(timelines, catalog, task, opt.window)) {
      part_of(c, spec.split).push_back(serialize(spec, codec, {}, c.max_len));
    }
  }
  sort_and_shuffle(c, opt.seed);
  return c;
}

EntityCodec corpus_codec(const Corpus& corpus, const StruIdTable& ids,
                         const std::array<int, kEntityTypes>& entity_counts, std::uint64_t seed) {
  if (corpus.vocab.mode() == Vocabulary::Mode::flat) {
    return EntityCodec(corpus.vocab, entity_counts, seed);
  }
  return EntityCodec(corpus.vocab, ids);
}

Corpus ablation_variant(const Corpus& full, Ablation variant, const StruIdTable& ids,
                        const std::array<int, kEntityTypes>& entity_counts, std::uint64_t seed) {
  if (full.vocab.mode() != Vocabulary::Mode::structural) {
    throw ContractError("ablation variants derive from the full structural corpus");
  }
  auto keep_task = [variant](Task t) {
    switch (variant) {
      case Ablation::no_reg:
        return t != Task::region;
      case Ablation::no_cat:
        return t != Task::category;
      case Ablation::no_regcat:
        return t == Task::poi;
      default:
        return true;
    }
  };
  Corpus out;
  out.window = full.window;
  if (variant != Ablation::no_struid && variant != Ablation::no_pref &&
      variant != Ablation::no_seq) {
    out.vocab = full.vocab;
    out.max_len = full.max_len;
    for (SplitPart s : {SplitPart::train, SplitPart::valid, SplitPart::test}) {
      for (const TokenSequence& seq : part_of(full, s)) {
        if (keep_task(seq.task)) part_of(out, s).push_back(seq);
      }
    }
    return out;
  }
  const EntityCodec from(full.vocab, ids);
  SegmentOptions seg;
  if (variant == Ablation::no_struid) {
    out.vocab = Vocabulary::flat(entity_counts);
    out.max_len = max_sequence_length(0, full.window);
  } else {
    out.vocab = full.vocab;
    out.max_len = full.max_len;
    seg.preference = variant != Ablation::no_pref;
    seg.history = variant != Ablation::no_seq;
  }
  const EntityCodec to = corpus_codec(out, ids, entity_counts, seed);
  for (SplitPart s : {SplitPart::train, SplitPart::valid, SplitPart::test}) {
    for (const TokenSequence& seq : part_of(full, s)) {
      part_of(out, s).push_back(serialize(detokenize(seq, from), to, seg, out.max_len));
    }
  }
  return out;
}

nlohmann::json sequence_to_json(const TokenSequence& s) {
  return {{"task", to_string(s.task)},     {"split", to_string(s.split)},
          {"user", s.user.index},           {"position", s.position},
          {"target_poi", s.target_poi},     {"input_ids", s.input_tokens},
          {"target_ids", s.target_tokens}};
}

TokenSequence sequence_from_json(const nlohmann::json& j) {
  TokenSequence s;
  s.task = task_from(j.at("task").get<std::string>());
  const auto split = j.at("split").get<std::string>();
  bool known = false;
  for (std::size_t i = 0; i < kSplitNames.size(); ++i) {
    if (kSplitNames[i] == split) {
      s.split = static_cast<SplitPart>(i);
      known = true;
    }
  }
  if (!known) throw DataError("unknown split '" + split + "'");
  s.user = {EntityType::user, j.at("user").get<int>()};
  s.position = j.at("position").get<int>();
  s.target_poi = j.at("target_poi").get<int>();
  s.input_tokens = j.at("input_ids").get<std::vector<int>>();
  s.target_tokens = j.at("target_ids").get<std::vector<int>>();
  return s;
}

void write_corpus_jsonl(std::ostream& out, std::span<const TokenSequence> seqs) {
  for (const TokenSequence& s : seqs) out << sequence_to_json(s).dump() << '\n';
}

std::vector<TokenSequence> read_corpus_jsonl(std::istream& in) {
  std::vector<TokenSequence> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(sequence_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("corpus line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace kgrec
