// Copyright 2026 The cecollm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <atomic>
#include <random>
#include <thread>

#include "cecollm/bench/bench.hpp"
#include "cecollm/cloud/server.hpp"
#include "cecollm/edge/client.hpp"
#include "fixtures.hpp"

namespace cecollm {
namespace {

using edge::EdgeClient;
using edge::EdgeConfig;
using edge::Mode;
using edge::UploadPolicy;
using model::TokenId;

struct Rig {
  std::shared_ptr<const model::Model> model;
  cloud::CloudServer server;
  cloud::SimCloudHost host;
  EdgeClient client;

  Rig(std::shared_ptr<const model::Model> m, EdgeConfig cfg, transport::LinkParams link = {},
      cloud::ServerMode mode = cloud::ServerMode::kPartition, std::uint32_t split = 0)
      : model(m),
        server(m, [&] {
          cloud::ServerConfig sc;
          sc.mode = mode;
          sc.split_layer = split;
          return sc;
        }()),
        host(server, link),
        client(m, [&] {
          cfg.split_layer = split;
          return cfg;
        }(), host.client_ptr()) {}
};

EdgeConfig config_for(Mode mode, double theta, codec::WireEncoding wire, std::uint32_t max_new) {
  EdgeConfig c;
  c.mode = mode;
  c.theta = theta;
  c.wire_precision = wire;
  c.max_new_tokens = max_new;
  if (mode == Mode::kStandalone) c.upload_policy = UploadPolicy::kNever;
  return c;
}

TEST(EdgeClient, OffloadEverythingMatchesMonolithic) {
  std::mt19937_64 rng(11);
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    auto m = testing::make_model(testing::tiny_config(), seed);
    Rig rig(m, config_for(Mode::kCollaborative, 1.5, codec::WireEncoding::kF32, 12));
    auto prompt = testing::random_prompt(rng, 3, 20);
    auto r = rig.client.run(prompt);
    EXPECT_EQ(r.tokens, model::greedy_decode_monolithic(*m, prompt, 12)) << "seed " << seed;
    EXPECT_EQ(r.cloud_requests, r.tokens.size());
  }
}

TEST(EdgeClient, NaiveSplitAndCloudOnlyMatchMonolithic) {
  std::mt19937_64 rng(12);
  auto m = testing::make_model(testing::tiny_config(), 3);
  auto prompt = testing::random_prompt(rng, 5, 15);
  const auto oracle = model::greedy_decode_monolithic(*m, prompt, 10);
  {
    Rig rig(m, config_for(Mode::kNaiveSplit, 0.8, codec::WireEncoding::kF32, 10));
    auto r = rig.client.run(prompt);
    EXPECT_EQ(r.tokens, oracle);
    EXPECT_DOUBLE_EQ(r.cloud_request_rate(), 1.0);
  }
  {
    Rig rig(m, config_for(Mode::kCloudOnly, 0.8, codec::WireEncoding::kF32, 10), {}, cloud::ServerMode::kFull);
    auto r = rig.client.run(prompt);
    EXPECT_EQ(r.tokens, oracle);
    EXPECT_EQ(r.timeline.edge.count(), 0);
  }
}

TEST(EdgeClient, ThetaZeroNeverUploadsNothing) {
  auto m = testing::make_model(testing::tiny_config(), 4);
  auto cfg = config_for(Mode::kCollaborative, 0.0, codec::WireEncoding::kF16, 15);
  cfg.upload_policy = UploadPolicy::kNever;
  Rig rig(m, cfg);
  std::vector<TokenId> prompt{1, 2, 3, 4, 5};
  auto r = rig.client.run(prompt);
  EXPECT_EQ(r.cloud_requests, 0u);
  EXPECT_EQ(r.bytes_up + r.bytes_down, 0u);
  for (const auto& t : r.trace) {
    ASSERT_TRUE(t.exit_index.has_value());
    EXPECT_EQ(*t.exit_index, 0u);
    EXPECT_EQ(t.evaluations.size(), 1u);
  }

  EdgeClient standalone(m, config_for(Mode::kStandalone, 0.0, codec::WireEncoding::kF16, 15), nullptr);
  EXPECT_EQ(standalone.run(prompt).tokens, r.tokens);
}

TEST(EdgeClient, TimelineDecomposesExactly) {
  auto m = testing::make_model(testing::tiny_config(), 5);
  for (Mode mode : {Mode::kCollaborative, Mode::kNaiveSplit, Mode::kCloudOnly}) {
    Rig rig(m, config_for(mode, 0.5, codec::WireEncoding::kF16, 20), {},
            mode == Mode::kCloudOnly ? cloud::ServerMode::kFull : cloud::ServerMode::kPartition);
    std::vector<TokenId> prompt{9, 8, 7, 6, 5, 4};
    auto r = rig.client.run(prompt);
    EXPECT_EQ(r.timeline.total, r.timeline.edge + r.timeline.comm + r.timeline.cloud) << to_string(mode);
  }
}

TEST(EdgeClient, UploadPoliciesAgreeOnTokens) {
  auto m = testing::make_model(testing::tiny_config(), 6);
  std::vector<TokenId> prompt{40, 41, 42, 43, 44, 45, 46};
  std::vector<std::vector<TokenId>> outs;
  for (auto policy : {UploadPolicy::kAlways, UploadPolicy::kOnFirstOffload, UploadPolicy::kNever}) {
    auto cfg = config_for(Mode::kCollaborative, 0.7, codec::WireEncoding::kF32, 25);
    cfg.upload_policy = policy;
    Rig rig(m, cfg);
    outs.push_back(rig.client.run(prompt).tokens);
  }
  EXPECT_EQ(outs[0], outs[1]);
  EXPECT_EQ(outs[0], outs[2]);
}

TEST(EdgeSequence, ShortCircuitsExitEvaluation) {
  auto m = testing::make_model(testing::tiny_config(), 7);
  auto part = model::split(*m, m->config.split_layer).first;
  std::vector<TokenId> prompt{3, 1, 4, 1, 5};
  {
    edge::EdgeSequence seq(part, {});
    auto st = seq.step(prompt, 0, 0.0);
    ASSERT_EQ(st.evaluations.size(), 1u);
    ASSERT_TRUE(st.decided);
    EXPECT_EQ(st.decided->exit_index, 0u);
  }
  {
    edge::EdgeSequence seq(part, {});
    auto st = seq.step(prompt, 0, 1.5);
    EXPECT_EQ(st.evaluations.size(), 2u);
    EXPECT_FALSE(st.decided);
    EXPECT_EQ(seq.head_evaluations(), 2u);
    EXPECT_EQ(st.compute, ComputeTiming{}.edge.of(5 * 2, 2));
    const TokenId next[1] = {7};
    auto none = seq.step(next, 5, std::nullopt);
    EXPECT_TRUE(none.evaluations.empty());
    EXPECT_EQ(seq.head_evaluations(), 2u);
    EXPECT_EQ(seq.length(), 6u);
    EXPECT_THROW(seq.step(next, 3, std::nullopt), edge::EdgeError);
  }
}

TEST(EdgeSequence, DecisionsAreMonotoneInTheta) {
  auto m = testing::make_model(testing::tiny_config(), 8);
  auto part = model::split(*m, m->config.split_layer).first;
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    auto prompt = testing::random_prompt(rng, 1, 20);
    std::optional<std::size_t> prev_exit;  // exit chosen at the previous, lower theta
    bool prev_decided = true;
    for (double theta : {0.0, 0.05, 0.1, 0.2, 0.4, 0.8, 1.0, 1.01}) {
      edge::EdgeSequence seq(part, {});
      auto st = seq.step(prompt, 0, theta);
      // Raising theta can only move the decision later or to the cloud.
      if (!prev_decided) {
        EXPECT_FALSE(st.decided);
      }
      if (st.decided && prev_exit) {
        EXPECT_GE(st.decided->exit_index, *prev_exit);
      }
      prev_decided = st.decided.has_value();
      prev_exit = st.decided ? std::optional(st.decided->exit_index) : std::nullopt;
    }
    EXPECT_FALSE(prev_decided);
  }
}

TEST(EdgeClient, EveryTokenHasExactlyOneOrigin) {
  auto m = testing::make_model(testing::tiny_config(), 9);
  std::mt19937_64 rng(9);
  for (double theta : {0.0, 0.2, 0.5, 0.9, 1.5}) {
    Rig rig(m, config_for(Mode::kCollaborative, theta, codec::WireEncoding::kF32, 30));
    auto r = rig.client.run(testing::random_prompt(rng, 3, 10));
    std::uint64_t cloud = 0;
    for (const auto& t : r.trace) {
      EXPECT_NE(t.cloud, t.exit_index.has_value());
      cloud += t.cloud;
    }
    EXPECT_EQ(cloud, r.cloud_requests);
    if (theta == 0.0) {
      EXPECT_EQ(cloud, 0u);
    }
    if (theta > 1.0) {
      EXPECT_EQ(cloud, r.tokens.size());
    }
  }
}

// Collects every ContextUpload that reaches the server side of a link.
std::vector<codec::ContextUpload> drain_uploads(transport::Endpoint& server) {
  std::vector<codec::ContextUpload> out;
  while (auto f = server.recv()) out.push_back(std::get<codec::ContextUpload>(codec::decode_message(f->frame).message));
  return out;
}

model::HiddenStateBlock block(std::uint32_t first, std::uint32_t n, std::uint32_t d) {
  model::HiddenStateBlock b;
  b.first_position = first;
  b.hidden_dim = d;
  b.activations.assign(static_cast<std::size_t>(n) * d, 0.0f);
  for (std::uint32_t i = 0; i < n; ++i) b.activations[static_cast<std::size_t>(i) * d] = static_cast<float>(first + i);
  return b;
}

TEST(AsyncUploader, SendsEachPositionOnce) {
  transport::SimLink link({});
  auto client = link.client_endpoint();
  auto server = link.server_endpoint();
  {
    edge::AsyncUploader up(*client, 5, 2, 4, codec::WireEncoding::kF32, 2, 64);
    up.enqueue(block(0, 5, 4), SimTime{0});
    up.enqueue(block(3, 5, 4), SimTime{0});   // 3,4 already sent
    up.enqueue(block(0, 10, 4), SimTime{0});  // only 8,9 are new
    up.enqueue(block(20, 2, 4), SimTime{0});  // gaps are allowed
    up.flush();
    EXPECT_EQ(up.frames_sent(), 4u);
    EXPECT_EQ(up.positions_sent(), 12u);
    EXPECT_THROW(
        {
          up.enqueue(block(63, 2, 4), SimTime{0});
          up.flush();
        },
        edge::EdgeError);
  }
  client->close();
  auto ups = drain_uploads(*server);
  ASSERT_EQ(ups.size(), 5u);  // the overflowing block still sent position 63
  const std::vector<std::pair<std::uint32_t, std::uint32_t>> want{{0, 5}, {5, 3}, {8, 2}, {20, 2}, {63, 1}};
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(ups[i].first_position, want[i].first);
    EXPECT_EQ(ups[i].num_positions, want[i].second);
    auto rows = codec::unpack_activations(ups[i], 4);
    EXPECT_EQ(rows[0], static_cast<float>(want[i].first));
    EXPECT_EQ(ups[i].layer, 2u);
  }
}

// Endpoint whose sends block until released.
class GatedEndpoint final : public transport::Endpoint {
 public:
  transport::Delivery send(std::vector<std::uint8_t>, SimTime at) override {
    std::unique_lock lk(mu_);
    ++entered_;
    cv_.notify_all();
    cv_.wait(lk, [&] { return open_; });
    return {at, at};
  }
  std::optional<transport::Received> recv() override { return std::nullopt; }
  void close() override {}
  transport::TransferLedger ledger() const override { return {}; }
  bool simulated() const override { return true; }
  SimTime now() const override { return SimTime{0}; }

  void wait_entered(int n) {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return entered_ >= n; });
  }
  void release() {
    std::lock_guard lk(mu_);
    open_ = true;
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int entered_ = 0;
  bool open_ = false;
};

TEST(AsyncUploader, QueueIsBounded) {
  GatedEndpoint gate;
  edge::AsyncUploader up(gate, 1, 2, 4, codec::WireEncoding::kF16, 2, 64);
  up.enqueue(block(0, 1, 4), SimTime{0});
  gate.wait_entered(1);  // first block is in flight
  up.enqueue(block(1, 1, 4), SimTime{0});
  up.enqueue(block(2, 1, 4), SimTime{0});
  std::atomic<bool> done{false};
  std::thread t([&] {
    up.enqueue(block(3, 1, 4), SimTime{0});
    done = true;
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  EXPECT_FALSE(done);
  gate.release();
  t.join();
  up.flush();
  EXPECT_EQ(up.positions_sent(), 4u);
}

// Forwards to a real endpoint but holds back the first ContextUpload after
// the prompt's. With `release_on_timeout` the held frame is sent when the
// cloud reports CONTEXT_TIMEOUT, so the client's retry succeeds.
class HoldingEndpoint final : public transport::Endpoint {
 public:
  HoldingEndpoint(std::shared_ptr<transport::Endpoint> inner, bool release_on_timeout)
      : inner_(std::move(inner)), release_(release_on_timeout) {}
  transport::Delivery send(std::vector<std::uint8_t> frame, SimTime at) override {
    auto env = codec::decode_message(frame);
    if (std::holds_alternative<codec::ContextUpload>(env.message) && ++uploads_ == 2) {
      held_ = std::move(frame);
      return {at, at};
    }
    return inner_->send(std::move(frame), at);
  }
  std::optional<transport::Received> recv() override {
    auto r = inner_->recv();
    if (r && release_ && !held_.empty()) {
      auto env = codec::decode_message(r->frame);
      if (auto* e = std::get_if<codec::Error>(&env.message); e && e->code == codec::ErrorCode::kContextTimeout) {
        inner_->send(std::move(held_), r->delivery);
        held_.clear();
      }
    }
    return r;
  }
  void close() override { inner_->close(); }
  transport::TransferLedger ledger() const override { return inner_->ledger(); }
  bool simulated() const override { return true; }
  SimTime now() const override { return SimTime{0}; }

 private:
  std::shared_ptr<transport::Endpoint> inner_;
  bool release_;
  int uploads_ = 0;
  std::vector<std::uint8_t> held_;
};

TEST(EdgeClient, RetriesOnceAfterContextTimeout) {
  auto m = testing::make_model(testing::tiny_config(), 10);
  std::vector<TokenId> prompt{10, 20, 30, 40};
  for (bool release : {true, false}) {
    cloud::CloudServer server(m, {});
    cloud::SimCloudHost host(server, {});
    auto ep = std::make_shared<HoldingEndpoint>(host.client_ptr(), release);
    EdgeClient client(m, config_for(Mode::kCollaborative, 1.5, codec::WireEncoding::kF32, 6), ep);
    if (release) {
      auto r = client.run(prompt);
      EXPECT_EQ(r.context_retries, 1u);
      EXPECT_EQ(r.tokens, model::greedy_decode_monolithic(*m, prompt, 6));
    } else {
      try {
        client.run(prompt);
        ADD_FAILURE() << "expected a context timeout";
      } catch (const edge::EdgeError& e) {
        EXPECT_EQ(e.code(), codec::ErrorCode::kContextTimeout);
      }
    }
  }
}

TEST(EdgeClient, FailsWithoutACloud) {
  auto m = testing::make_model(testing::tiny_config(), 11);
  std::vector<TokenId> prompt{1, 2, 3};
  EdgeClient standalone(m, config_for(Mode::kStandalone, 0.5, codec::WireEncoding::kF16, 10), nullptr);
  EXPECT_EQ(standalone.run(prompt).bytes_up, 0u);
  EdgeClient orphan(m, config_for(Mode::kCollaborative, 1.5, codec::WireEncoding::kF16, 10), nullptr);
  EXPECT_THROW(orphan.run(prompt), edge::EdgeError);

  cloud::ServerConfig sc;
  sc.mode = cloud::ServerMode::kFull;
  cloud::CloudServer server(m, sc);
  transport::SimLink link({});
  EdgeClient client(m, config_for(Mode::kCloudOnly, 0.8, codec::WireEncoding::kF16, 10), link.client_endpoint());
  link.shutdown();
  EXPECT_THROW(client.run(prompt), transport::TransportError);
}

TEST(EdgeClient, RejectsBadInput) {
  auto m = testing::make_model(testing::tiny_config(), 12);
  EdgeClient c(m, config_for(Mode::kStandalone, 0.5, codec::WireEncoding::kF16, 10), nullptr);
  EXPECT_THROW(c.run(std::vector<TokenId>{}), std::invalid_argument);
  EXPECT_THROW(c.run(std::vector<TokenId>{1, 999}), std::invalid_argument);
  try {
    c.run(std::vector<TokenId>(120, 1));
    ADD_FAILURE();
  } catch (const edge::EdgeError& e) {
    EXPECT_EQ(e.code(), codec::ErrorCode::kSequenceOverflow);
  }
  auto cfg = config_for(Mode::kStandalone, 0.5, codec::WireEncoding::kF16, 10);
  cfg.upload_policy = UploadPolicy::kAlways;
  EXPECT_THROW(EdgeClient(m, cfg, nullptr), std::invalid_argument);
  cfg = config_for(Mode::kCollaborative, -0.1, codec::WireEncoding::kF16, 10);
  EXPECT_THROW(EdgeClient(m, cfg, nullptr), std::invalid_argument);
  cfg.theta = 0.5;
  cfg.max_new_tokens = 0;
  EXPECT_THROW(EdgeClient(m, cfg, nullptr), std::invalid_argument);
  EXPECT_EQ(edge::parse_mode("naive-split"), Mode::kNaiveSplit);
  EXPECT_EQ(edge::parse_upload_policy("on-first-offload"), UploadPolicy::kOnFirstOffload);
  EXPECT_EQ(edge::parse_wire_precision("f32"), codec::WireEncoding::kF32);
  EXPECT_THROW(edge::parse_mode("hybrid"), std::invalid_argument);
  EXPECT_THROW(edge::parse_wire_precision("bf16"), std::invalid_argument);
}

// Measured framed bytes equal the closed-form model at several lengths, for
// the quadratic naive split and the linear collaborative path.
TEST(EdgeClient, MeasuredBytesFollowTheAnalyticModel) {
  auto m = testing::make_model(testing::tiny_config(), 13);
  const std::vector<TokenId> prompt{11, 22, 33, 44, 55};
  const std::uint64_t d = m->config.hidden_dim;
  for (std::uint32_t n : {25u, 50u, 100u}) {
    struct Case {
      Mode mode;
      bench::Strategy strategy;
      codec::WireEncoding wire;
      cloud::ServerMode server;
    };
    for (const Case& c : {Case{Mode::kNaiveSplit, bench::Strategy::kNaive, codec::WireEncoding::kF32, cloud::ServerMode::kPartition},
                          Case{Mode::kCollaborative, bench::Strategy::kCeCollm, codec::WireEncoding::kF16, cloud::ServerMode::kPartition},
                          Case{Mode::kCollaborative, bench::Strategy::kCeCollm, codec::WireEncoding::kF32, cloud::ServerMode::kPartition},
                          Case{Mode::kCloudOnly, bench::Strategy::kCloudOnly, codec::WireEncoding::kF16, cloud::ServerMode::kFull}}) {
      Rig rig(m, config_for(c.mode, 1.5, c.wire, n), {}, c.server);
      auto r = rig.client.run(prompt);
      auto want = bench::analytic_bytes(prompt.size(), r.tokens.size(), d, c.wire, c.strategy, r.cloud_requests);
      EXPECT_EQ(r.bytes_up, want.framed_up) << to_string(c.mode) << " n=" << n;
      EXPECT_EQ(r.bytes_down, want.framed_down) << to_string(c.mode) << " n=" << n;
      if (c.mode == Mode::kCollaborative) {
        EXPECT_EQ(r.uploaded_positions, prompt.size() + r.tokens.size());
      }
    }
  }
}

TEST(EdgeClient, PartialOffloadBytesCountOnlyRequests) {
  auto m = testing::make_model(testing::tiny_config(), 14);
  const std::vector<TokenId> prompt{1, 9, 8, 7, 3, 3};
  // Threshold at the median exit-0 confidence of an all-offload run, so some
  // tokens exit early and some go to the cloud.
  std::vector<double> confs;
  {
    Rig probe(m, config_for(Mode::kCollaborative, 1.5, codec::WireEncoding::kF16, 40));
    for (const auto& t : probe.client.run(prompt).trace) confs.push_back(t.evaluations.at(0).conf);
  }
  auto cfg = config_for(Mode::kCollaborative, bench::quantile(confs, 0.5), codec::WireEncoding::kF16, 40);
  Rig rig(m, cfg);
  auto r = rig.client.run(prompt);
  ASSERT_GT(r.cloud_requests, 0u);
  ASSERT_LT(r.cloud_requests, r.tokens.size());
  auto want = bench::analytic_bytes(prompt.size(), r.tokens.size(), m->config.hidden_dim, cfg.wire_precision,
                                    bench::Strategy::kCeCollm, r.cloud_requests);
  EXPECT_EQ(r.bytes_up, want.framed_up);
  EXPECT_EQ(r.bytes_down, want.framed_down);
}

}  // namespace
}  // namespace cecollm
