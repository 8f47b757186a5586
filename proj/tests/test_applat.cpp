// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tests for appearance codes: the fixed condition coordinate layout, the two
// code modes (free vectors and coordinate-driven generation), and linear
// interpolation between codes.

#include <cstring>
#include <string>
#include <vector>

#include "ava/applat/latent.hpp"
#include "ava/util/rng.hpp"
#include "helpers.hpp"

using namespace ava;
using applat::LatentMode;

namespace {

const std::vector<std::string> kAll = {"day", "evening", "rain", "night"};

applat::LatentBank small_bank(LatentMode mode, uint64_t seed, int dim = 8) {
    util::Rng rng(seed);
    return applat::make_latent_bank<float>(mode, dim, 4, 6, kAll, rng);
}

bool same_bytes(const diffcore::Tensor& a, const diffcore::Tensor& b) {
    if (a.shape() != b.shape()) return false;
    return std::memcmp(a.data().data(), b.data().data(), size_t(a.size()) * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("condition coordinates pin the 2D appearance plane") {
    const auto& coords = applat::condition_coords();
    REQUIRE(coords.size() == 4);
    CHECK(coords.at("day") == Eigen::Vector2d(-1.0, 0.0));
    CHECK(coords.at("evening") == Eigen::Vector2d(0.0, 0.0));
    CHECK(coords.at("rain") == Eigen::Vector2d(0.0, 1.0));
    CHECK(coords.at("night") == Eigen::Vector2d(1.0, 0.0));

    // Evening sits exactly halfway between day and night on the plane.
    CHECK(0.5 * (coords.at("day") + coords.at("night")) == coords.at("evening"));
}

TEST_CASE("latent mode names round-trip and reject unknowns") {
    CHECK(applat::latent_mode_from_name("free") == LatentMode::kFree);
    CHECK(applat::latent_mode_from_name("structured") == LatentMode::kStructured);
    CHECK(std::string(applat::latent_mode_name(LatentMode::kFree)) == "free");
    CHECK(std::string(applat::latent_mode_name(LatentMode::kStructured)) == "structured");
    CHECK_THROWS_AS(applat::latent_mode_from_name("fancy"), util::InputError);
}

TEST_CASE("bank construction registers conditions and rejects unknown names") {
    const auto bank = small_bank(LatentMode::kStructured, 31, 136);
    CHECK(bank.dim == 136);
    CHECK(bank.conditions == kAll);
    for (const auto& c : kAll) CHECK(bank.has_condition(c));
    CHECK_FALSE(bank.has_condition("fog"));

    util::Rng rng(32);
    CHECK_THROWS_AS(applat::make_latent_bank<float>(LatentMode::kFree, 8, 4, 4, {"day", "fog"}, rng),
                    util::InputError);
}

TEST_CASE("structured codes are deterministic functions of the coordinate") {
    const auto bank = small_bank(LatentMode::kStructured, 33, 136);

    const auto z_day = applat::code_for_condition("day", bank);
    CHECK(z_day.dim() == 136);
    CHECK(z_day.z.shape() == diffcore::Shape{1, 136});
    CHECK(z_day.provenance.kind == applat::Provenance::Kind::kStructured);
    CHECK(z_day.provenance.coord == Eigen::Vector2d(-1.0, 0.0));

    const auto z_day2 = applat::code_for_condition("day", bank);
    CHECK(same_bytes(z_day.z, z_day2.z));

    const auto z_night = applat::code_for_condition("night", bank);
    CHECK_FALSE(same_bytes(z_day.z, z_night.z));

    // code_structured at the registered coordinate gives the same bits.
    const auto direct = applat::code_structured(Eigen::Vector2d(-1.0, 0.0), bank);
    CHECK(same_bytes(z_day.z, direct.z));

    CHECK_THROWS_AS(applat::code_for_condition("fog", bank), util::InputError);
}

TEST_CASE("free codes come straight from the per-condition parameter vectors") {
    const auto bank = small_bank(LatentMode::kFree, 34);

    const auto z = applat::code_for_condition("rain", bank);
    CHECK(z.provenance.kind == applat::Provenance::Kind::kFree);
    CHECK(z.z.requires_grad());
    CHECK(same_bytes(z.z, bank.free_codes.at("rain")));

    // Free codes are small random vectors, distinct per condition.
    CHECK_FALSE(same_bytes(applat::code_free("day", bank).z, applat::code_free("night", bank).z));

    try {
        applat::code_free("dusk", bank);
        FAIL("expected InputError");
    } catch (const util::InputError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("unknown condition 'dusk'") != std::string::npos);
        CHECK(msg.find("registered: day, evening, rain, night") != std::string::npos);
    }
}

TEST_CASE("interpolation endpoints hand back the original code objects") {
    const auto bank = small_bank(LatentMode::kStructured, 35);
    const auto a = applat::code_for_condition("day", bank);
    const auto b = applat::code_for_condition("night", bank);

    const auto at_a = applat::interpolate(a, b, 1.0);
    const auto at_b = applat::interpolate(a, b, 0.0);
    CHECK(at_a.z.data().data() == a.z.data().data());  // same underlying buffer
    CHECK(at_b.z.data().data() == b.z.data().data());
    CHECK(same_bytes(at_a.z, a.z));
    CHECK(same_bytes(at_b.z, b.z));
}

TEST_CASE("interpolation is the stated convex combination") {
    // Construct codes by hand so the expected blend is exact arithmetic.
    applat::AppearanceCode a, b;
    a.z = diffcore::Tensor::constant({1, 4}, {2.0f, -4.0f, 6.0f, 0.0f});
    b.z = diffcore::Tensor::constant({1, 4}, {1.0f, -2.0f, 3.0f, 0.0f});

    // a = 2b, so alpha * a + (1 - alpha) * b at alpha = 0.5 equals 1.5 * b.
    const auto mid = applat::interpolate(a, b, 0.5);
    CHECK(mid.provenance.kind == applat::Provenance::Kind::kInterpolated);
    CHECK(mid.provenance.alpha == 0.5);
    for (int i = 0; i < 4; ++i) {
        CHECK(mid.z.data()[i] == doctest::Approx(1.5 * b.z.data()[i]).epsilon(1e-7));
    }

    // interp(a, b, alpha) + interp(a, b, 1 - alpha) == a + b elementwise.
    for (double alpha : {0.125, 0.3, 0.75}) {
        const auto lo = applat::interpolate(a, b, alpha);
        const auto hi = applat::interpolate(a, b, 1.0 - alpha);
        for (int i = 0; i < 4; ++i) {
            const double sum = double(lo.z.data()[i]) + double(hi.z.data()[i]);
            CHECK(sum == doctest::Approx(double(a.z.data()[i]) + double(b.z.data()[i]))
                             .epsilon(1e-6));
        }
    }
}

TEST_CASE("interpolation validates shape and weight domain") {
    applat::AppearanceCode a, b, c;
    a.z = diffcore::Tensor::zeros({1, 4});
    b.z = diffcore::Tensor::zeros({1, 4});
    c.z = diffcore::Tensor::zeros({1, 6});

    CHECK_THROWS_AS(applat::interpolate(a, c, 0.5), util::InputError);
    CHECK_THROWS_AS(applat::interpolate(a, b, -0.1), util::InputError);
    CHECK_THROWS_AS(applat::interpolate(a, b, 1.1), util::InputError);
    CHECK_THROWS_AS(applat::interpolate(a, b, std::nan("")), util::InputError);
    CHECK_NOTHROW(applat::interpolate(a, b, 0.5));
}

TEST_CASE("structured codes at interpolated coordinates move smoothly") {
    // Interpolating the *codes* of day and night is a straight line in z; the
    // midpoint must be closer to both endpoints than they are to each other.
    const auto bank = small_bank(LatentMode::kStructured, 36, 16);
    const auto a = applat::code_for_condition("day", bank);
    const auto b = applat::code_for_condition("night", bank);
    const auto mid = applat::interpolate(a, b, 0.5);

    auto l2 = [](const diffcore::Tensor& x, const diffcore::Tensor& y) {
        double s = 0.0;
        for (int i = 0; i < x.size(); ++i) {
            const double d = double(x.data()[i]) - double(y.data()[i]);
            s += d * d;
        }
        return std::sqrt(s);
    };
    const double ab = l2(a.z, b.z);
    CHECK(l2(mid.z, a.z) == doctest::Approx(0.5 * ab).epsilon(1e-5));
    CHECK(l2(mid.z, b.z) == doctest::Approx(0.5 * ab).epsilon(1e-5));
}
