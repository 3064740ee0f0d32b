#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <map>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "support.hpp"

using namespace fusenet;
using namespace fusenet::testing;

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Minimal stand-in for the embedding service. Each row is
// [text length, index within request, 1, 0, ...] unless `fixed_row` is set.
class MockService {
 public:
  std::size_t dim = 4;
  std::vector<double> fixed_row;
  int fail_first = 0;        // answer this many requests with `fail_status`
  int fail_status = 503;
  int dim_switch_after = -1;  // report dim+1 from this request on
  std::chrono::milliseconds delay{0};

  MockService() {
    server_.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) { handle(req, res); });
    server_.Post("/v1/embed", [this](const httplib::Request& req, httplib::Response& res) { handle(req, res); });
    server_.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(nlohmann::json{{"status", "ok"}, {"dim", dim}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockService() {
    server_.stop();
    thread_.join();
  }

  std::string url(const std::string& prefix = "") const { return "http://127.0.0.1:" + std::to_string(port_) + prefix; }

  std::vector<std::size_t> request_sizes() const {
    std::lock_guard lock(mu_);
    return sizes_;
  }
  int max_in_flight() const { return max_in_flight_; }
  int requests() const { return requests_; }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    const int now = ++in_flight_;
    int prev = max_in_flight_.load();
    while (now > prev && !max_in_flight_.compare_exchange_weak(prev, now)) {
    }
    const int n = requests_++;
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
    --in_flight_;

    if (n < fail_first) {
      res.status = fail_status;
      return;
    }
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (...) {
      res.status = 400;
      return;
    }
    const auto texts = body.at("texts").get<std::vector<std::string>>();
    if (texts.size() > 64) {
      res.status = 413;
      return;
    }
    {
      std::lock_guard lock(mu_);
      sizes_.push_back(texts.size());
    }
    const std::size_t d = (dim_switch_after >= 0 && n >= dim_switch_after) ? dim + 1 : dim;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < texts.size(); ++i) {
      std::vector<double> row(d, 0.0);
      if (!fixed_row.empty()) {
        row = fixed_row;
      } else {
        row[0] = static_cast<double>(texts[i].size());
        row[1] = static_cast<double>(i);
        row[2] = 1.0;
      }
      rows.push_back(row);
    }
    res.set_content(nlohmann::json{{"embeddings", rows}, {"dim", d}, {"model", "mock"}}.dump(), "application/json");
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  mutable std::mutex mu_;
  std::vector<std::size_t> sizes_;
  std::atomic<int> in_flight_{0}, max_in_flight_{0}, requests_{0};
};

ProviderConfig remote_cfg(const std::string& url, std::size_t dim = 4) {
  ProviderConfig c;
  c.kind = ProviderKind::remote;
  c.endpoint = url;
  c.dim = dim;
  c.backoff = std::chrono::milliseconds(1);
  c.timeout = std::chrono::milliseconds(5000);
  return c;
}

std::vector<std::string> texts_of(std::size_t n) {
  std::vector<std::string> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back(std::string(i % 17 + 1, 'a' + static_cast<char>(i % 26)));
  return t;
}

}  // namespace

TEST(Tokenize, LowercaseAlnumRuns) {
  EXPECT_EQ(tokenize("Drug-deal, TONIGHT!! x2"), (std::vector<std::string>{"drug", "deal", "tonight", "x2"}));
  EXPECT_TRUE(tokenize("  ...  ").empty());
  EXPECT_EQ(tokenize("caf\xc3\xa9 ok"), (std::vector<std::string>{"caf\xc3\xa9", "ok"}));
}

TEST(HashEmbed, EmptyTextIsZero) {
  for (double x : hash_embed("", 16)) EXPECT_EQ(x, 0.0);
  for (double x : hash_embed("?!", 16)) EXPECT_EQ(x, 0.0);
}

TEST(HashEmbed, SingleTokenIsSignedUnitVector) {
  const auto v = hash_embed("word", 4);
  int nonzero = 0;
  for (double x : v) {
    if (x != 0.0) {
      ++nonzero;
      EXPECT_EQ(std::abs(x), 1.0);
    }
  }
  EXPECT_EQ(nonzero, 1);
}

TEST(HashEmbed, MatchesTwoPassCountOracle) {
  // Pass 1 counts tokens; pass 2 hashes each distinct token once.
  const std::string text = "drug deal tonight drug";
  std::map<std::string, int> counts;
  std::string cur;
  for (char c : text + " ") {
    if (c == ' ') {
      if (!cur.empty()) ++counts[cur];
      cur.clear();
    } else {
      cur += c;
    }
  }
  std::vector<double> want(8, 0.0);
  for (const auto& [tok, n] : counts) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : tok) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    want[h % 8] += (h >> 63 ? -1.0 : 1.0) * n;
  }
  const double z = norm(want);
  for (double& x : want) x /= z;
  const auto got = hash_embed(text, 8);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(got[i], want[i], 1e-15);
}

TEST(HashEmbed, UnitNormAndOrderInsensitive) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    std::string text;
    for (int k = 0; k < 1 + static_cast<int>(rng.below(30)); ++k) text += "w" + std::to_string(rng.below(40)) + " ";
    EXPECT_NEAR(norm(hash_embed(text, 32)), 1.0, 1e-12);
  }
  EXPECT_EQ(hash_embed("a b", 16), hash_embed("b a", 16));
  EXPECT_EQ(hash_embed("same text", 16), hash_embed("same text", 16));
}

TEST(EmbedCorpus, HashingRowsFollowNodeOrderAndEmptyIsZero) {
  const Graph g = make_graph(3, {{0, 1}, {1, 2}});
  const TextCorpus c{{"alpha beta", "", "gamma"}};
  ProviderConfig pc;
  pc.dim = 8;
  const auto m = embed_corpus(g, c, pc);
  ASSERT_EQ(m.num_rows(), 3u);
  EXPECT_EQ(m.source, "hashing");
  const auto r0 = m.row(0), r1 = m.row(1), r2 = m.row(2);
  EXPECT_EQ(std::vector<double>(r0.begin(), r0.end()), hash_embed("alpha beta", 8));
  for (double x : r1) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(std::vector<double>(r2.begin(), r2.end()), hash_embed("gamma", 8));
}

TEST(Precomputed, RoundTripAndMissingRowsAreZero) {
  TempDir dir;
  const Graph g = make_graph(3, {{0, 1}});
  EmbeddingMatrix m{2, {1.5, -2.0, 0.0, 0.0, 3.25, 4.0}, "x"};
  write_embeddings(dir / "e.jsonl", g, m);
  EXPECT_EQ(load_precomputed(dir / "e.jsonl", g, 2).values, m.values);
  const auto partial = load_precomputed(dir.write("p.jsonl", "{\"id\":\"n2\",\"vec\":[1,2]}\n"), g, 2);
  EXPECT_EQ(partial.values, (std::vector<double>{0, 0, 0, 0, 1, 2}));
}

TEST(Precomputed, WrongLengthIsContractErrorUnknownIdIsDataError) {
  TempDir dir;
  const Graph g = make_graph(2, {{0, 1}});
  EXPECT_THROW(load_precomputed(dir.write("a.jsonl", "{\"id\":\"n0\",\"vec\":[1,2,3]}\n"), g, 2), ContractError);
  EXPECT_THROW(load_precomputed(dir.write("b.jsonl", "{\"id\":\"q\",\"vec\":[1,2]}\n"), g, 2), DataError);
}

TEST(ProviderConfig, Validation) {
  ProviderConfig c;
  c.dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = remote_cfg("http://127.0.0.1:1");
  c.batch = 65;
  EXPECT_THROW(c.validate(), ConfigError);
  c.batch = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = remote_cfg("");
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Remote, ZeroTextsMakeNoRequest) {
  MockService svc;
  EXPECT_TRUE(remote_embed_batch({}, remote_cfg(svc.url())).empty());
  EXPECT_EQ(svc.requests(), 0);
}

TEST(Remote, HundredThirtyTextsSplitSixtyFourSixtyFourTwo) {
  MockService svc;
  const auto texts = texts_of(130);
  const auto rows = remote_embed_batch(texts, remote_cfg(svc.url()));
  auto sizes = svc.request_sizes();
  std::sort(sizes.begin(), sizes.end());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{2, 64, 64}));
  ASSERT_EQ(rows.size(), 130u);
  // Order preserved: row k carries the length of text k and its chunk position.
  for (std::size_t k = 0; k < 130; ++k) {
    EXPECT_EQ(rows[k][0], static_cast<double>(texts[k].size()));
    EXPECT_EQ(rows[k][1], static_cast<double>(k % 64));
  }
}

TEST(Remote, RequestCountIsCeilingForAllSizesUpTo200) {
  MockService svc;
  int before = 0;
  for (std::size_t n = 0; n <= 200; ++n) {
    const auto rows = remote_embed_batch(texts_of(n), remote_cfg(svc.url()));
    ASSERT_EQ(rows.size(), n);
    const int made = svc.requests() - before;
    before = svc.requests();
    EXPECT_EQ(made, static_cast<int>((n + 63) / 64)) << "n=" << n;
  }
}

TEST(Remote, AtMostFourChunksInFlight) {
  MockService svc;
  svc.delay = std::chrono::milliseconds(30);
  auto cfg = remote_cfg(svc.url());
  cfg.batch = 8;
  remote_embed_batch(texts_of(100), cfg);  // 13 chunks
  EXPECT_LE(svc.max_in_flight(), 4);
  EXPECT_GE(svc.max_in_flight(), 2);
}

TEST(Remote, FixedMockVectorFillsEveryRow) {
  MockService svc;
  svc.fixed_row = {1, 0, 0, 0};
  for (const auto& r : remote_embed_batch(texts_of(70), remote_cfg(svc.url()))) EXPECT_EQ(r, svc.fixed_row);
}

TEST(Remote, CorpusMatchesMockPayloadRowForRow) {
  MockService svc;
  const Graph g = make_graph(4, {{0, 1}, {2, 3}});
  const TextCorpus c{{"abc", "", "hello", "z"}};
  const auto m = embed_corpus(g, c, remote_cfg(svc.url()));
  EXPECT_EQ(m.values, (std::vector<double>{3, 0, 1, 0, /* empty */ 0, 0, 0, 0, 5, 1, 1, 0, 1, 2, 1, 0}));
}

TEST(Remote, PathPrefixIsHonoured) {
  MockService svc;
  EXPECT_EQ(remote_embed_batch(texts_of(3), remote_cfg(svc.url("/v1"))).size(), 3u);
}

TEST(Remote, RetriesThenSucceeds) {
  MockService svc;
  svc.fail_first = 2;
  const auto rows = remote_embed_batch(texts_of(5), remote_cfg(svc.url()));
  EXPECT_EQ(rows.size(), 5u);
  EXPECT_EQ(svc.requests(), 3);
}

TEST(Remote, PersistentFailureIsTransportErrorWithStatus) {
  MockService svc;
  svc.fail_first = 1000;
  svc.fail_status = 503;
  try {
    remote_embed_batch(texts_of(5), remote_cfg(svc.url()));
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_EQ(e.status(), 503);
  }
  EXPECT_EQ(svc.requests(), 4);  // first attempt + 3 retries
}

TEST(Remote, UnreachableIsTransportError) {
  auto cfg = remote_cfg("http://127.0.0.1:1");
  cfg.max_retries = 1;
  EXPECT_THROW(remote_embed_batch(texts_of(2), cfg), TransportError);
}

TEST(Remote, DimChangeAcrossChunksIsContractError) {
  MockService svc;
  svc.dim_switch_after = 1;
  auto cfg = remote_cfg(svc.url());
  cfg.max_in_flight = 1;
  EXPECT_THROW(remote_embed_batch(texts_of(130), cfg), ContractError);
}

TEST(Remote, DimDifferentFromConfigIsContractError) {
  MockService svc;
  svc.dim = 6;
  const Graph g = make_graph(2, {{0, 1}});
  EXPECT_THROW(embed_corpus(g, TextCorpus{{"a", "b"}}, remote_cfg(svc.url(), 4)), ContractError);
}

TEST(Remote, Health) {
  MockService svc;
  svc.dim = 12;
  EXPECT_EQ(remote_health(remote_cfg(svc.url())), 12u);
}

// Runs only when FUSENET_EMBED_URL points at a live embedding service.
TEST(LiveService, ConformsToWireProtocol) {
  const char* url = std::getenv("FUSENET_EMBED_URL");
  if (!url || !*url) GTEST_SKIP() << "FUSENET_EMBED_URL not set";
  ProviderConfig cfg;
  cfg.kind = ProviderKind::remote;
  cfg.endpoint = url;
  const std::size_t dim = remote_health(cfg);
  ASSERT_GT(dim, 0u);

  std::vector<std::string> texts;
  for (int i = 0; i < 130; ++i) texts.push_back(i % 2 ? "wire transfer offshore" : "quarterly report " + std::to_string(i));
  const auto rows = remote_embed_batch(texts, cfg);
  ASSERT_EQ(rows.size(), texts.size());
  for (const auto& r : rows) {
    ASSERT_EQ(r.size(), dim);
    for (double v : r) EXPECT_TRUE(std::isfinite(v));
  }
  // Equal inputs in different chunks embed identically.
  EXPECT_EQ(rows[1], rows[129]);
  const auto again = remote_embed_batch(std::span(texts).subspan(0, 3), cfg);
  EXPECT_EQ(again[0], rows[0]);
}
