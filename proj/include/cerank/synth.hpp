#pragma once

// Synthetic topic-clustered corpus. Each topic owns a disjoint token cluster;
// contexts and their true responses draw mostly from that cluster plus a
// shared filler pool, so neighbour-context retrieval carries real signal.
// Distractors in the eval groups are true responses from other topics.

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cerank/data.hpp"

namespace cerank {

struct SynthData {
  std::vector<DialogueSample> train;
  std::vector<EvalGroup> dev;
  std::vector<EvalGroup> test;
};

namespace detail {

struct TopicTokens {
  std::vector<std::string> topic;   // owned by this topic only
  std::vector<std::string> filler;  // shared across topics
};

// Every context and true response of a topic opens with the topic head
// token, so a context always shares at least one topic token with its true
// response and never with a distractor from another topic.
inline std::string make_utterance(const std::vector<std::string>& topic,
                                  const std::vector<std::string>& filler,
                                  int len, double topic_share, bool lead_head,
                                  std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_topic(0, topic.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_filler(0, filler.size() - 1);
  std::string out;
  for (int i = 0; i < len; ++i) {
    if (!out.empty()) out += ' ';
    if (i == 0 && lead_head) {
      out += topic.front();
    } else if (coin(rng) < topic_share) {
      out += topic[pick_topic(rng)];
    } else {
      out += filler[pick_filler(rng)];
    }
  }
  return out;
}

}  // namespace detail

inline SynthData synth_generate(int num_topics, int contexts_per_topic,
                                int vocab_size, std::uint64_t seed) {
  if (num_topics < 2)
    throw std::invalid_argument("synth: need at least 2 topics");
  if (contexts_per_topic < 1)
    throw std::invalid_argument("synth: contexts_per_topic must be >= 1");
  if (vocab_size <= num_topics * 4)
    throw std::invalid_argument("synth: vocab_size must exceed 4 * num_topics");

  std::mt19937_64 rng(seed);
  const int tokens_per_topic =
      std::max(2, vocab_size / (2 * num_topics));
  const int filler_count = vocab_size - num_topics * tokens_per_topic;

  std::vector<std::string> filler;
  filler.reserve(filler_count);
  for (int i = 0; i < filler_count; ++i)
    filler.push_back("f" + std::to_string(i));
  std::vector<std::vector<std::string>> topics(num_topics);
  for (int t = 0; t < num_topics; ++t) {
    topics[t].reserve(tokens_per_topic);
    for (int j = 0; j < tokens_per_topic; ++j)
      topics[t].push_back("t" + std::to_string(t) + "w" + std::to_string(j));
  }

  std::uniform_int_distribution<int> turn_count(2, 4);
  std::uniform_int_distribution<int> turn_len(4, 8);
  std::uniform_int_distribution<int> resp_len(5, 10);

  auto make_context = [&](int topic) {
    std::vector<std::string> turns;
    const int n = turn_count(rng);
    for (int i = 0; i < n; ++i) {
      turns.push_back(detail::make_utterance(topics[topic], filler,
                                             turn_len(rng), 0.7,
                                             /*lead_head=*/i == 0, rng));
    }
    return turns;
  };
  auto make_response = [&](int topic) {
    return detail::make_utterance(topics[topic], filler, resp_len(rng), 0.6,
                                  /*lead_head=*/true, rng);
  };

  SynthData data;
  std::uint64_t next_id = 1;

  std::vector<std::vector<std::string>> responses_by_topic(num_topics);
  for (int t = 0; t < num_topics; ++t) {
    for (int i = 0; i < contexts_per_topic; ++i) {
      DialogueSample s;
      s.id = next_id++;
      s.context = make_context(t);
      s.response = make_response(t);
      s.label = 1;
      responses_by_topic[t].push_back(s.response);
      data.train.push_back(std::move(s));
    }
  }

  const int groups_per_topic = std::max(1, contexts_per_topic / 10);
  auto make_groups = [&](std::vector<EvalGroup>& out) {
    for (int t = 0; t < num_topics; ++t) {
      for (int g = 0; g < groups_per_topic; ++g) {
        EvalGroup group;
        group.id = next_id++;
        group.context = make_context(t);
        const std::string positive = make_response(t);
        std::vector<std::string> distractors;
        std::uniform_int_distribution<int> pick_topic(0, num_topics - 1);
        while (distractors.size() < 9) {
          int other = pick_topic(rng);
          if (other == t) continue;
          std::uniform_int_distribution<std::size_t> pick_resp(
              0, responses_by_topic[other].size() - 1);
          distractors.push_back(responses_by_topic[other][pick_resp(rng)]);
        }
        std::uniform_int_distribution<int> pick_pos(0, 9);
        group.positive_index = pick_pos(rng);
        group.candidates.resize(10);
        std::size_t di = 0;
        for (int c = 0; c < 10; ++c) {
          group.candidates[c] =
              (c == group.positive_index) ? positive : distractors[di++];
        }
        out.push_back(std::move(group));
      }
    }
  };
  make_groups(data.dev);
  make_groups(data.test);
  return data;
}

}  // namespace cerank
