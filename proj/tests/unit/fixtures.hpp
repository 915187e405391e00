#pragma once

#include "egcnn/aspect.hpp"
#include "egcnn/model.hpp"
#include "egcnn/synthetic.hpp"
#include "egcnn/text.hpp"

namespace egcnn::testing_support {

struct SyntheticTask {
  synthetic::SyntheticSpec spec;
  synthetic::SyntheticData data;
  text::Dataset ds;
  aspect::AspectTable aspects;
};

inline SyntheticTask make_task(synthetic::SyntheticSpec spec, int lda_aspects = 3) {
  SyntheticTask t;
  t.spec = spec;
  t.data = synthetic::generate(spec);
  text::DatasetOptions opt;
  opt.shape = {spec.max_len + spec.signal_tokens, 6};
  opt.min_count = 1;
  t.ds = text::make_dataset(t.data.splits, t.data.domains, opt);
  std::vector<std::vector<int>> docs;
  for (const auto& r : t.ds.splits[text::Split::train]) docs.push_back(r.word_ids);
  aspect::LdaConfig lda;
  lda.aspects = lda_aspects;
  lda.iterations = 10;
  t.aspects = aspect::AspectTable::from_phi(aspect::fit_aspects(docs, t.ds.vocab.size(), lda).phi,
                                            t.ds.vocab.hash());
  return t;
}

inline model::ModelConfig small_config(const SyntheticTask& t) {
  model::ModelConfig c;
  c.m = t.ds.shape.m;
  c.max_word_len = t.ds.shape.max_word_len;
  c.dim = 4;
  c.char_dim = 3;
  c.char_width = 2;
  c.char_features = 3;
  c.aspects = static_cast<int>(t.aspects.aspects());
  c.channels = 4;
  c.widths = {2, 3};
  return c;
}

}  // namespace egcnn::testing_support
