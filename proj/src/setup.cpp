#include "vltaboo/setup.hpp"

#include <algorithm>
#include <ostream>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "vltaboo/error.hpp"
#include "vltaboo/rng.hpp"

namespace vltaboo {

const char* to_string(Setup s) {
  switch (s) {
    case Setup::S1: return "S1";
    case Setup::S2: return "S2";
    case Setup::S3: return "S3";
    case Setup::S4: return "S4";
    case Setup::S5: return "S5";
  }
  return "?";
}

Setup setup_from_string(const std::string& s) {
  for (auto v : {Setup::S1, Setup::S2, Setup::S3, Setup::S4, Setup::S5}) {
    if (s == to_string(v)) return v;
  }
  if (s.size() == 1 && s[0] >= '1' && s[0] <= '5') return static_cast<Setup>(s[0] - '0');
  throw InvalidArgument("unknown setup '" + s + "' (expected S1..S5)");
}

const char* to_string(AttributeOrder o) {
  switch (o) {
    case AttributeOrder::seeded_random: return "seeded_random";
    case AttributeOrder::ranked: return "ranked";
    case AttributeOrder::prefix_nested: return "prefix_nested";
  }
  return "?";
}

AttributeOrder attribute_order_from_string(const std::string& s) {
  for (auto v : {AttributeOrder::seeded_random, AttributeOrder::ranked,
                 AttributeOrder::prefix_nested}) {
    if (s == to_string(v)) return v;
  }
  throw InvalidArgument("unknown attribute order '" + s + "'");
}

void check_spec(const SetupSpec& spec) {
  if ((spec.setup == Setup::S4 || spec.setup == Setup::S5) && spec.x == 0) {
    throw InvalidArgument(std::string(to_string(spec.setup)) + " requires x >= 1");
  }
  if (spec.grammar.kind == GrammarKind::class_only ||
      spec.grammar.kind == GrammarKind::no_class_base) {
    if (spec.x > 0) {
      throw InvalidArgument(std::string("grammar ") + to_string(spec.grammar.kind) +
                            " cannot carry attributes");
    }
  }
  if (spec.grammar.kind == GrammarKind::content_based && !spec.grammar.slots) {
    throw InvalidArgument("content_based grammar requires a slot table");
  }
}

namespace sampling {

namespace {
constexpr std::uint64_t kRoleInstance = 0;
constexpr std::uint64_t kRoleAbsent = 1ULL << 40;
constexpr std::uint64_t kRoleWrongLabel = kRoleAbsent + 1;
constexpr std::uint64_t kRolePlacement = kRoleAbsent + 2;
}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, ImageId image, std::uint64_t role, std::size_t x,
                          AttributeOrder order) {
  std::uint64_t s = mix_seed(seed, image);
  s = mix_seed(s, role);
  if (order == AttributeOrder::seeded_random) s = mix_seed(s, 0x100000000ULL + x);
  return s;
}

std::vector<AttributeId> arrange(const AttributeDataset& ds, std::vector<AttributeId> pool,
                                 std::uint64_t stream, AttributeOrder order) {
  if (order != AttributeOrder::ranked) {
    SplitMix rng(stream);
    rng.shuffle(std::span(pool));
  }
  // At most one expression per description as long as distinct ones remain.
  std::unordered_set<std::string_view> seen;
  std::vector<AttributeId> fresh;
  std::vector<AttributeId> repeats;
  fresh.reserve(pool.size());
  for (AttributeId a : pool) {
    const auto& attr = ds.attributes.at(a);
    if (attr.expression.empty() || seen.insert(attr.description).second) {
      fresh.push_back(a);
    } else {
      repeats.push_back(a);
    }
  }
  fresh.insert(fresh.end(), repeats.begin(), repeats.end());
  return fresh;
}

}  // namespace sampling

namespace {

using sampling::arrange;
using sampling::stream_seed;
using sampling::kRoleAbsent;
using sampling::kRoleInstance;
using sampling::kRolePlacement;
using sampling::kRoleWrongLabel;

/// Unrendered gallery: what each position says, before text generation.
struct PlannedPrompt {
  ClassId gallery_class = 0;
  bool labelled = true;
  std::vector<AttributeId> attributes;
};

struct GalleryPlan {
  std::vector<PlannedPrompt> prompts;
  std::size_t correct_index = 0;
  std::size_t short_prompts = 0;
};

std::vector<AttributeId> take(std::vector<AttributeId> arranged, std::size_t x) {
  if (arranged.size() > x) arranged.resize(x);
  return arranged;
}

/// Non-instance roles never use stored order: negatives are drawn at random.
AttributeOrder draw_order(AttributeOrder order) {
  return order == AttributeOrder::ranked ? AttributeOrder::seeded_random : order;
}

std::vector<AttributeId> absent_pool(const AttributeDataset& ds, const ImageAnnotation& img) {
  std::set<AttributeId> present(img.attributes.begin(), img.attributes.end());
  std::unordered_set<std::string_view> present_desc;
  for (AttributeId a : img.attributes) {
    const auto& attr = ds.attributes.at(a);
    if (!attr.expression.empty()) present_desc.insert(attr.description);
  }
  std::vector<AttributeId> pool;
  for (const auto& attr : ds.attributes) {
    if (present.count(attr.id)) continue;
    if (!attr.expression.empty() && present_desc.count(attr.description)) continue;
    pool.push_back(attr.id);
  }
  return pool;
}

std::optional<SkipReason> plan_gallery(const AttributeDataset& ds, ImageId image,
                                       const SetupSpec& spec, GalleryPlan& plan) {
  const auto& img = ds.images.at(image);
  const std::size_t x = spec.x;
  if (img.attributes.size() < x) return SkipReason::too_few_attributes;

  const auto order = spec.attribute_order;
  const auto instance_attrs =
      take(arrange(ds, img.attributes, stream_seed(spec.seed, image, kRoleInstance, x, order),
                   order),
           x);
  const ClassId truth = img.class_id;
  const std::size_t n_classes = ds.num_classes();

  auto class_sample = [&](ClassId c) {
    const auto& profile = ds.class_profiles.at(c).attributes;
    if (profile.size() < x) ++plan.short_prompts;
    const auto o = draw_order(order);
    return take(arrange(ds, profile, stream_seed(spec.seed, image, 1 + c, x, o), o), x);
  };

  if (spec.setup == Setup::S5) {
    const auto pool = absent_pool(ds, img);
    if (pool.size() < x) return SkipReason::too_few_absent_attributes;
    if (n_classes < 2) throw InvalidArgument("S5 needs at least two classes");
    const auto o = draw_order(order);
    PlannedPrompt right{truth, true,
                        take(arrange(ds, pool, stream_seed(spec.seed, image, kRoleAbsent, x, o), o),
                             x)};
    SplitMix label_rng(stream_seed(spec.seed, image, kRoleWrongLabel, x, o));
    auto wrong = static_cast<ClassId>(label_rng.below(n_classes - 1));
    if (wrong >= truth) ++wrong;
    PlannedPrompt adversary{wrong, true, instance_attrs};
    SplitMix place_rng(stream_seed(spec.seed, image, kRolePlacement, x, o));
    plan.correct_index = static_cast<std::size_t>(place_rng.below(2));
    if (plan.correct_index == 0) {
      plan.prompts = {std::move(right), std::move(adversary)};
    } else {
      plan.prompts = {std::move(adversary), std::move(right)};
    }
    return std::nullopt;
  }

  plan.prompts.reserve(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    const auto cls = static_cast<ClassId>(c);
    PlannedPrompt p;
    p.gallery_class = cls;
    p.labelled = spec.setup != Setup::S4;
    if (cls == truth) {
      p.attributes = instance_attrs;
      plan.correct_index = c;
    } else {
      switch (spec.setup) {
        case Setup::S1: break;
        case Setup::S2: p.attributes = instance_attrs; break;
        case Setup::S3:
        case Setup::S4: p.attributes = class_sample(cls); break;
        case Setup::S5: break;
      }
    }
    plan.prompts.push_back(std::move(p));
  }
  return std::nullopt;
}

bool contained(const std::vector<AttributeId>& subset, const std::vector<AttributeId>& sorted_set) {
  return std::all_of(subset.begin(), subset.end(), [&](AttributeId a) {
    return std::binary_search(sorted_set.begin(), sorted_set.end(), a);
  });
}

double score_plan(const GalleryPlan& plan, const std::vector<AttributeId>& truth_sorted,
                  OracleScoring scoring) {
  std::size_t ties = 0;
  for (std::size_t i = 0; i < plan.prompts.size(); ++i) {
    if (i == plan.correct_index) continue;
    if (contained(plan.prompts[i].attributes, truth_sorted)) ++ties;
  }
  if (scoring == OracleScoring::strict) return ties == 0 ? 1.0 : 0.0;
  return 1.0 / (1.0 + static_cast<double>(ties));
}

std::vector<AttributeId> sorted_copy(std::vector<AttributeId> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

GalleryOutcome build_gallery(const AttributeDataset& ds, ImageId image, const SetupSpec& spec) {
  check_spec(spec);
  if (!ds.has_image_attributes() && spec.x > 0) {
    throw InvalidArgument("dataset has no per-image attributes; run attribute detection first");
  }
  GalleryPlan plan;
  GalleryOutcome out;
  if (auto skip = plan_gallery(ds, image, spec, plan)) {
    out.skip = skip;
    return out;
  }
  GallerySet g;
  g.image = image;
  g.correct_index = plan.correct_index;
  g.short_prompts = plan.short_prompts;
  g.prompts.reserve(plan.prompts.size());
  g.classes.reserve(plan.prompts.size());
  for (const auto& p : plan.prompts) {
    std::optional<ClassId> label;
    if (p.labelled) label = p.gallery_class;
    g.prompts.push_back(render(spec.grammar, ds, label, p.attributes));
    g.classes.push_back(p.gallery_class);
  }
  out.gallery = std::move(g);
  return out;
}

double skip_rate(const AttributeDataset& ds, std::size_t x) {
  if (ds.images.empty()) return 0.0;
  if (!ds.has_image_attributes() && x > 0) {
    throw InvalidArgument("dataset has no per-image attributes");
  }
  std::size_t skipped = 0;
  for (const auto& img : ds.images) skipped += img.attributes.size() < x ? 1 : 0;
  return static_cast<double>(skipped) / static_cast<double>(ds.images.size());
}

double SkipLedger::rate(std::size_t x) const {
  if (total == 0) return 0.0;
  return static_cast<double>(skipped.at(x)) / static_cast<double>(total);
}

SkipLedger skip_ledger(const AttributeDataset& ds, std::size_t x_max) {
  SkipLedger ledger;
  ledger.total = ds.images.size();
  ledger.skipped.assign(x_max + 1, 0);
  for (const auto& img : ds.images) {
    for (std::size_t x = img.attributes.size() + 1; x <= x_max; ++x) ++ledger.skipped[x];
  }
  return ledger;
}

double oracle_score(const AttributeDataset& ds, const GallerySet& gallery, OracleScoring scoring) {
  GalleryPlan plan;
  plan.correct_index = gallery.correct_index;
  for (std::size_t i = 0; i < gallery.prompts.size(); ++i) {
    plan.prompts.push_back({gallery.classes.at(i), false, gallery.prompts[i].attributes});
  }
  return score_plan(plan, sorted_copy(ds.images.at(gallery.image).attributes), scoring);
}

double oracle_accuracy(const AttributeDataset& ds, std::size_t x, const OracleOptions& opts) {
  if (x == 0) throw InvalidArgument("oracle_accuracy requires x >= 1");
  if (opts.trials == 0) throw InvalidArgument("oracle_accuracy requires trials >= 1");
  if (!ds.has_image_attributes()) throw InvalidArgument("dataset has no per-image attributes");
  SetupSpec spec;
  spec.setup = Setup::S4;
  spec.x = x;
  spec.attribute_order = opts.attribute_order;

  double total = 0.0;
  std::size_t evaluated = 0;
  for (const auto& img : ds.images) {
    if (img.attributes.size() < x) continue;
    const auto truth = sorted_copy(img.attributes);
    double score = 0.0;
    for (std::size_t t = 0; t < opts.trials; ++t) {
      spec.seed = opts.trials == 1 ? opts.seed : mix_seed(opts.seed, t);
      GalleryPlan plan;
      plan_gallery(ds, img.id, spec, plan);
      score += score_plan(plan, truth, opts.scoring);
    }
    total += score / static_cast<double>(opts.trials);
    ++evaluated;
  }
  if (evaluated == 0) throw InvalidArgument("oracle_accuracy: every image skipped at this x");
  return total / static_cast<double>(evaluated);
}

void write_gallery_ndjson(const GallerySet& g, Setup setup, std::size_t x, std::ostream& out) {
  nlohmann::json prompts = nlohmann::json::array();
  for (std::size_t i = 0; i < g.prompts.size(); ++i) {
    prompts.push_back({{"text", g.prompts[i].text},
                       {"class", g.classes.at(i)},
                       {"attribute_ids", g.prompts[i].attributes}});
  }
  out << nlohmann::json{{"image_id", g.image},
                        {"setup", to_string(setup)},
                        {"x", x},
                        {"prompts", prompts},
                        {"correct_index", g.correct_index}}
             .dump()
      << '\n';
}

}  // namespace vltaboo
