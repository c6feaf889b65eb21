#include <doctest.h>

#include <numeric>
#include <set>
#include <sstream>

#include "vltaboo/error.hpp"
#include "vltaboo/rng.hpp"
#include "vltaboo/scorer.hpp"

using namespace vltaboo;

namespace {

SetupSpec spec_for(Setup s, std::size_t x) {
  SetupSpec spec;
  spec.setup = s;
  spec.x = x;
  spec.grammar.kind = GrammarKind::awa2_comma_list;
  return spec;
}

EmbeddingMatrix rows_from(const std::vector<Embedding>& v) {
  EmbeddingMatrix m(static_cast<Eigen::Index>(v.size()), v.front().size());
  for (std::size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
  return m;
}

}  // namespace

TEST_CASE("two-prompt gallery with similarities 0.9 and 0.1") {
  Embedding image = Embedding::Unit(2, 0);
  const float s = std::sqrt(1.0f - 0.81f);
  const float t = std::sqrt(1.0f - 0.01f);
  EmbeddingMatrix prompts(2, 2);
  prompts << 0.9f, s, 0.1f, t;
  const auto g = score_embeddings(image, prompts, 0);
  CHECK(g.similarities(0) == doctest::Approx(0.9).epsilon(1e-6));
  const double e = std::exp(0.8);
  CHECK(g.probabilities(0) == doctest::Approx(e / (1.0 + e)).epsilon(1e-6));
  CHECK(g.predicted_index == 0);
  CHECK(g.correct);
  CHECK_FALSE(g.tied);
  CHECK(score_embeddings(image, prompts, 1).correct == false);
}

TEST_CASE("identical prompts tie toward the lowest index") {
  Embedding image = l2_normalized(Embedding::Ones(4));
  EmbeddingMatrix prompts = EmbeddingMatrix::Constant(5, 4, 0.5f);
  const auto g = score_embeddings(image, prompts, 2);
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(g.probabilities(i) == doctest::Approx(0.2));
  CHECK(g.predicted_index == 0);
  CHECK(g.tied);
  CHECK_FALSE(g.correct);
  CHECK_THROWS_AS(score_embeddings(image, EmbeddingMatrix(0, 4), 0), InvalidArgument);
  CHECK_THROWS_AS(score_embeddings(image, prompts, 5), InvalidArgument);
}

TEST_CASE("separable mock wins every gallery") {
  SyntheticSpec s;
  s.classes = 6;
  s.attributes = 30;
  s.profile_size = 5;
  s.disjoint_profiles = true;
  const auto ds = make_synthetic_dataset(s);
  MockBackend backend(ds, MockStructure{10.0, 0.1, 0.0, 0});
  for (Setup setup : {Setup::S1, Setup::S2, Setup::S3, Setup::S4, Setup::S5}) {
    for (std::size_t x = (setup >= Setup::S4 ? 1 : 0); x <= 3; ++x) {
      const auto r = run_setup(ds, backend, spec_for(setup, x));
      CHECK(r.accuracy == 1.0);
      CHECK(r.n_evaluated + static_cast<std::size_t>(std::lround(r.skip_rate * ds.num_images())) ==
            ds.num_images());
    }
  }
}

TEST_CASE("shifting similarities never changes the prediction") {
  SplitMix rng(3);
  for (int t = 0; t < 500; ++t) {
    Eigen::VectorXd sims(1 + static_cast<Eigen::Index>(rng.below(10)));
    for (Eigen::Index i = 0; i < sims.size(); ++i) sims(i) = rng.uniform() * 2.0 - 1.0;
    const double shift = rng.uniform() * 20.0 - 10.0;
    const Eigen::VectorXd shifted = (sims.array() + shift).matrix();
    CHECK(argmax(sims) == argmax(shifted));
    CHECK(argmax(softmax(sims)) == argmax(sims));
    CHECK(softmax(shifted).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("scaling before normalization leaves similarities unchanged") {
  SplitMix rng(4);
  for (int t = 0; t < 100; ++t) {
    std::vector<Embedding> raw;
    for (int i = 0; i < 4; ++i) {
      Embedding v(8);
      for (Eigen::Index k = 0; k < 8; ++k) v(k) = static_cast<float>(rng.uniform() - 0.5);
      raw.push_back(v);
    }
    Embedding img(8);
    for (Eigen::Index k = 0; k < 8; ++k) img(k) = static_cast<float>(rng.uniform() - 0.5);
    std::vector<Embedding> a, b;
    for (const auto& v : raw) {
      a.push_back(l2_normalized(v));
      b.push_back(l2_normalized(Embedding(v * 37.5f)));
    }
    const auto ga = score_embeddings(l2_normalized(img), rows_from(a), 0);
    const auto gb = score_embeddings(l2_normalized(Embedding(img * 0.01f)), rows_from(b), 0);
    CHECK((ga.similarities - gb.similarities).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("accuracy equals size-weighted mean of per-class recall") {
  const auto ds = make_synthetic_dataset({});
  MockBackend backend(ds, MockStructure{0.0, 1.0, 0.2, 1});
  const auto r = run_setup(ds, backend, spec_for(Setup::S4, 1));
  std::size_t correct = 0, evaluated = 0;
  double weighted = 0.0;
  for (const auto& c : r.per_class) {
    correct += c.correct;
    evaluated += c.evaluated;
    weighted += c.recall() * static_cast<double>(c.evaluated);
  }
  CHECK(evaluated == r.n_evaluated);
  CHECK(correct == r.n_correct);
  CHECK(r.accuracy == doctest::Approx(weighted / static_cast<double>(evaluated)));
  CHECK(r.accuracy > 0.0);
  CHECK(r.accuracy < 1.0);
}

TEST_CASE("image processing order does not affect the report") {
  const auto ds = make_synthetic_dataset({});
  MockBackend backend(ds, MockStructure{0.3, 1.0, 0.5, 2});
  const auto spec = spec_for(Setup::S3, 2);
  const auto base = run_setup(ds, backend, spec);
  RunSetupOptions opts;
  opts.order.resize(ds.num_images());
  std::iota(opts.order.begin(), opts.order.end(), ImageId{0});
  SplitMix rng(8);
  rng.shuffle(std::span(opts.order));
  CHECK(run_setup(ds, backend, spec, opts) == base);
  std::reverse(opts.order.begin(), opts.order.end());
  CHECK(run_setup(ds, backend, spec, opts) == base);
  opts.order.pop_back();
  CHECK_THROWS_AS(run_setup(ds, backend, spec, opts), InvalidArgument);
}

TEST_CASE("all images skipped is an error") {
  const auto ds = make_synthetic_dataset({});
  MockBackend backend(ds, {});
  CHECK_THROWS_WITH_AS(run_setup(ds, backend, spec_for(Setup::S1, 50)),
                       doctest::Contains("all skipped"), InvalidArgument);
}

TEST_CASE("top-k ordering") {
  Eigen::VectorXd sims(5);
  sims << 0.1, 0.4, 0.4, -0.2, 0.3;
  ScoredGallery g;
  g.similarities = sims;
  g.probabilities = softmax(sims);
  g.classes = {10, 11, 12, 13, 14};
  g.predicted_index = static_cast<std::size_t>(argmax(sims));
  const auto top1 = topk(g, 1);
  REQUIRE(top1.size() == 1);
  CHECK(top1[0].first == g.classes[g.predicted_index]);
  const auto all = topk(g, 5);
  CHECK(all[0].first == 11);
  CHECK(all[1].first == 12);
  std::set<ClassId> seen;
  for (std::size_t i = 0; i < all.size(); ++i) {
    seen.insert(all[i].first);
    if (i) CHECK(all[i].second <= all[i - 1].second);
  }
  CHECK(seen.size() == 5);
  CHECK_THROWS_AS(topk(g, 6), InvalidArgument);
}

TEST_CASE("distance profiles") {
  const auto ds = make_synthetic_dataset({});
  MockBackend backend(ds, MockStructure{1.0, 0.5, 0.3, 5});
  std::vector<ClassId> classes(ds.num_classes());
  std::iota(classes.begin(), classes.end(), ClassId{0});
  auto spec = spec_for(Setup::S2, 0);
  std::size_t profiles = 0;
  for (const auto& img : ds.images) {
    const auto p = distance_profile(backend, ds, img.id, classes, 3, spec);
    if (img.attributes.size() < 3) {
      CHECK_FALSE(p);
      continue;
    }
    REQUIRE(p);
    ++profiles;
    CHECK(p->distances.rows() == static_cast<Eigen::Index>(classes.size()));
    CHECK(p->distances.cols() == 4);
    CHECK(p->distances.minCoeff() >= 0.0);
    CHECK(p->distances.maxCoeff() <= 2.0);
    for (ClassId c : classes) {
      PromptGrammar only{GrammarKind::class_only};
      const auto prompt = render(only, ds, c, {});
      const double d0 =
          1.0 - cosine(backend.embed_prompts(std::span(&prompt, 1))[0], backend.embed_image(img));
      CHECK(p->distances(c, 0) == doctest::Approx(d0));
    }
  }
  CHECK(profiles > 0);

  // Identical prompts across classes give identical distances.
  AttributeDataset same = ds;
  for (auto& c : same.classes) c.label = "thing";
  StoreContents store;
  store.model_name = "s";
  store.dim = 2;
  store.records.push_back({StoreKeyKind::image, ds.images[0].key, {1.0f, 0.0f}});
  store.records.push_back({StoreKeyKind::text, "a photo of a thing", {0.6f, 0.8f}});
  StoreBackend sb(store);
  const auto p = distance_profile(sb, same, 0, classes, 0, spec);
  REQUIRE(p);
  for (Eigen::Index c = 0; c < p->distances.rows(); ++c) {
    CHECK(p->distances(c, 0) == doctest::Approx(0.4));
  }
  std::stringstream ss;
  write_distance_profile_ndjson(*p, ss);
  const std::string text = ss.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(classes.size()));
}

TEST_CASE("report csv formats") {
  EvalReport r;
  r.key = {"ViT-B-32", "awa2", Setup::S1, GrammarKind::awa2_comma_list, 0};
  r.accuracy = 0.9026;
  r.skip_rate = 0.0;
  r.n_evaluated = 37322;
  std::stringstream ss;
  write_report_csv_header(ss);
  write_report_csv_row(r, ss);
  CHECK(ss.str() ==
        "model,dataset,setup,grammar,x,accuracy,skip_rate,n_evaluated\n"
        "ViT-B-32,awa2,S1,awa2_comma_list,0,0.902600,0.000000,37322\n");

  AttributeDataset ds;
  ds.classes = {{0, "grizzly bear"}, {1, "a, b"}};
  r.per_class = {{0, 3, 4}, {1, 0, 0}};
  std::stringstream rc;
  write_recall_csv(r, ds, rc);
  CHECK(rc.str() == "class,label,recall,n\n0,grizzly bear,0.750000,4\n1,\"a, b\",0.000000,0\n");
  CHECK(format_real(0.5, 2) == "0.50");
}

TEST_CASE("top-k ndjson from a run") {
  const auto ds = make_synthetic_dataset({});
  MockBackend backend(ds, {});
  std::stringstream topk_out, galleries;
  RunSetupOptions opts;
  opts.topk = &topk_out;
  opts.galleries = &galleries;
  opts.topk_k = 2;
  const auto r = run_setup(ds, backend, spec_for(Setup::S1, 0), opts);
  const std::string t = topk_out.str();
  const std::string g = galleries.str();
  const auto lines = std::count(t.begin(), t.end(), '\n');
  CHECK(static_cast<std::size_t>(lines) == r.n_evaluated);
  CHECK(std::count(g.begin(), g.end(), '\n') == lines);
}
