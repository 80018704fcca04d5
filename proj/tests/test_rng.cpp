#include <doctest.h>

#include <set>

#include "wflab/rng.hpp"
#include "wflab/sha256.hpp"

using namespace wflab;

TEST_CASE("sha256 matches known vectors") {
    CHECK(hex_digest(Sha256::hash("")) ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(hex_digest(Sha256::hash("abc")) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    // Multi-block input.
    CHECK(hex_digest(Sha256::hash("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq")) ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("stream rng is deterministic and tag-separated") {
    Digest256 seed = Sha256::hash("seed");
    StreamRng a(seed, "x"), b(seed, "x"), c(seed, "y");
    CHECK(a.next_u64() == b.next_u64());
    StreamRng a2(seed, "x");
    CHECK(a2.next_u64() != c.next_u64());
}

TEST_CASE("below is in range and uniform-ish") {
    StreamRng r(std::uint64_t{7});
    int counts[5] = {0};
    for (int i = 0; i < 5000; ++i) {
        auto v = r.below(5);
        REQUIRE(v < 5);
        counts[v]++;
    }
    for (int c : counts) CHECK(c > 800);
}

TEST_CASE("sample_indices returns k distinct sorted indices") {
    StreamRng r(std::uint64_t{3});
    auto idx = r.sample_indices(100, 20);
    REQUIRE(idx.size() == 20);
    std::set<std::size_t> s(idx.begin(), idx.end());
    CHECK(s.size() == 20);
    CHECK(std::is_sorted(idx.begin(), idx.end()));
    CHECK(*idx.rbegin() < 100);
}
