#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "subtrack/acoustics.hpp"
#include "subtrack/error.hpp"

#include "support.hpp"

using namespace subtrack;
using acoustics::PropagationField;
using acoustics::loss_at;

TEST(LossAt, HandEvaluatedDefaults)
{
    const PropagationField f;
    // 40 + 20 log10(1) + ~0 + 25 cos(~0) = 65 -> floor
    EXPECT_DOUBLE_EQ(loss_at(f, 0.5, 500.0), 80.0);
    // 40 + 100 + 30, modulation killed at the surface
    EXPECT_NEAR(loss_at(f, 100000.0, 0.0), 170.0, 1e-9);
}

TEST(LossAt, ClosedFormInsideTheClamp)
{
    const PropagationField f;
    const double r = 20000.0, z = 300.0;
    const double expected = 40.0 + 20.0 * std::log10(r) + 0.3 * r / 1000.0 +
                            25.0 * std::cos(2.0 * std::numbers::pi * r / 35000.0) *
                                std::sin(std::numbers::pi * z / 1000.0) * std::sin(std::numbers::pi * 0.5);
    EXPECT_NEAR(loss_at(f, r, z), expected, 1e-12);
}

TEST(LossAt, RejectsBadDepthAndRange)
{
    const PropagationField f;
    EXPECT_THROW(loss_at(f, 100.0, -1.0), DomainError);
    EXPECT_THROW(loss_at(f, 100.0, 1000.5), DomainError);
    EXPECT_THROW(loss_at(f, -1.0, 10.0), DomainError);
}

TEST(LossAt, MonotoneWithoutModulation)
{
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        auto f = gen::random_field(rng);
        f.modulation_amp = 0.0;
        const double z = gen::uniform(rng, 0.0, f.water_depth);
        double r1 = gen::uniform(rng, 0.0, 1e5), r2 = gen::uniform(rng, 0.0, 1e5);
        if (r1 > r2)
            std::swap(r1, r2);
        EXPECT_LE(loss_at(f, r1, z), loss_at(f, r2, z));
    }
}

TEST(LossAt, AlwaysWithinFloorAndCeiling)
{
    Rng rng(8);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto f = gen::random_field(rng);
        const double v = loss_at(f, gen::uniform(rng, 0.0, 2e5), gen::uniform(rng, 0.0, f.water_depth));
        EXPECT_GE(v, f.loss_floor);
        EXPECT_LE(v, f.loss_ceiling);
    }
}

TEST(LossAt, Pure)
{
    const PropagationField f;
    EXPECT_EQ(loss_at(f, 12345.678, 432.1), loss_at(f, 12345.678, 432.1));
}

TEST(Field, Validation)
{
    PropagationField f;
    EXPECT_NO_THROW(f.validate());
    f.loss_floor = 200.0;
    EXPECT_THROW(f.validate(), DomainError);
    f = {};
    f.water_depth = 0.0;
    EXPECT_THROW(f.validate(), DomainError);
    f = {};
    f.source_depth = 1200.0;
    EXPECT_THROW(f.validate(), DomainError);
    EXPECT_DOUBLE_EQ(PropagationField{}.with_source_depth(100.0).source_depth, 100.0);
}

TEST(Diagram, SaturationCapsValues)
{
    const auto d = acoustics::render_diagram(PropagationField{}, 50000.0, 201, 101, 120.0);
    EXPECT_LE(d.values.maxCoeff(), 120.0);
    EXPECT_GE(d.values.minCoeff(), 80.0);
}

TEST(Diagram, CornersMatchPointwise)
{
    const PropagationField f;
    const auto d = acoustics::render_diagram(f, 40000.0, 2, 2);
    ASSERT_EQ(d.values.rows(), 2);
    ASSERT_EQ(d.values.cols(), 2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            EXPECT_EQ(d.values(i, j), loss_at(f, j * 40000.0, i * 1000.0));
}

TEST(Diagram, UnsaturatedEqualsPointwise)
{
    const PropagationField f;
    const auto d = acoustics::render_diagram(f, 50000.0, 11, 7);
    for (Eigen::Index i = 0; i < d.values.rows(); ++i)
        for (Eigen::Index j = 0; j < d.values.cols(); ++j)
            EXPECT_EQ(d.values(i, j), loss_at(f, d.range_axis(j), d.depth_axis(i)));
    EXPECT_DOUBLE_EQ(d.range_axis(10), 50000.0);
    EXPECT_DOUBLE_EQ(d.depth_axis(6), 1000.0);
}

TEST(Diagram, RejectsTinyGrids)
{
    EXPECT_ANY_THROW(acoustics::render_diagram(PropagationField{}, 100.0, 1, 5));
    EXPECT_ANY_THROW(acoustics::render_diagram(PropagationField{}, 0.0, 3, 5));
}

TEST(Diagram, CsvLayout)
{
    const auto d = acoustics::render_diagram(PropagationField{}, 1000.0, 3, 2);
    std::ostringstream os;
    acoustics::write_diagram_csv(os, d);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line.substr(0, line.find(',')), "depth\\range");
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 3);
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 3);
        const auto last = line.substr(line.rfind(',') + 1);
        EXPECT_EQ(last.size() - last.find('.'), 3u) << last; // two decimals
    }
    EXPECT_EQ(rows, 2);
}
