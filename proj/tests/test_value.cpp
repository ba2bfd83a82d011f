#include <gtest/gtest.h>

#include "com/value.hpp"

using namespace com;

namespace {

auto tup(Value super, std::vector<Member> members) -> Value { return make_tuple(std::move(super), std::move(members)); }

}  // namespace

TEST(Value, TupleMembersAreOrderedByName) {
    const auto a = tup({}, {{"y", Value::integer(2)}, {"x", Value::integer(1)}});
    const auto b = tup({}, {{"x", Value::integer(1)}, {"y", Value::integer(2)}});
    EXPECT_EQ(a, b);
    ASSERT_TRUE(a.is_tuple());
    EXPECT_EQ(a.as_tuple().members().front().dimension, "x");
}

TEST(Value, EmptyMembersAreDropped) {
    const auto t = tup({}, {{"x", Value{}}, {"y", Value::text("a")}});
    EXPECT_EQ(t.as_tuple().members().size(), 1U);
    EXPECT_TRUE(tup({}, {{"x", Value{}}}).is_empty());
}

TEST(Value, TupleWithoutMembersCollapsesToItsSuper) {
    const auto base = tup({}, {{"code", Value::text("DE")}});
    EXPECT_EQ(tup(base, {}), base);
}

TEST(Value, DuplicateDimensionIsRejected) {
    try {
        tup({}, {{"x", Value::integer(1)}, {"x", Value::integer(2)}});
        FAIL() << "expected DuplicateDimension";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::duplicate_dimension);
    }
}

TEST(Value, ConcatenationAndDecompositionRoundTrip) {
    const auto country = tup({}, {{"code", Value::text("DE")}});
    const auto city = tup({}, {{"cityName", Value::text("Berlin")}});
    const auto full = concat_extension(country, city);
    ASSERT_TRUE(full.is_tuple());
    EXPECT_EQ(full.as_tuple().super(), country);
    const auto segs = decompose_segments(full);
    ASSERT_EQ(segs.size(), 2U);
    EXPECT_EQ(segs[0], country);
    EXPECT_EQ(segs[1], city);
}

TEST(Value, PrimitiveExtensionUsesTheAnonymousDimension) {
    const auto base = tup({}, {{"code", Value::text("DE")}});
    const auto v = concat_extension(base, Value::integer(7));
    const auto segs = decompose_segments(v);
    ASSERT_EQ(segs.size(), 2U);
    EXPECT_EQ(segs[1], Value::integer(7));
}

TEST(Value, ConcatenationWithEmptySides) {
    const auto x = Value::integer(3);
    EXPECT_EQ(concat_extension(Value{}, x), x);
    EXPECT_EQ(concat_extension(x, Value{}), x);
    EXPECT_TRUE(decompose_segments(Value{}).empty());
}

TEST(Value, ExtensionCarryingASuperIsRejected) {
    const auto base = tup({}, {{"a", Value::integer(1)}});
    const auto ext = tup(base, {{"b", Value::integer(2)}});
    try {
        concat_extension(base, ext);
        FAIL() << "expected ExtensionHasSuper";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::extension_has_super);
    }
}

TEST(Value, TotalOrderIsByKindThenContent) {
    EXPECT_LT(compare_values(Value{}, Value::integer(0)), 0);
    EXPECT_LT(compare_values(Value::integer(1), Value::integer(2)), 0);
    EXPECT_EQ(compare_values(Value::text("a"), Value::text("a")), 0);
    EXPECT_GT(compare_values(Value::text("b"), Value::text("a")), 0);
    EXPECT_EQ(hash_value(tup({}, {{"x", Value::integer(1)}})), hash_value(tup({}, {{"x", Value::integer(1)}})));
}

TEST(Value, GraphMaterializesSharedNodes) {
    ValueGraph g;
    const auto country = g.add_node();
    g.add_member(country, "code", Value::text("DE"));
    const auto city = g.add_node();
    g.set_super(city, ValueGraph::Ref{country});
    g.add_member(city, "name", Value::text("Bonn"));
    const auto v = g.materialize(city);
    EXPECT_EQ(v.as_tuple().super(), tup({}, {{"code", Value::text("DE")}}));
}

TEST(Value, GraphRejectsSelfContainment) {
    ValueGraph g;
    const auto a = g.add_node();
    const auto b = g.add_node();
    g.add_member(a, "next", ValueGraph::Ref{b});
    g.add_member(b, "next", ValueGraph::Ref{a});
    try {
        (void)g.materialize(a);
        FAIL() << "expected CyclicComposition";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::cyclic_composition);
    }
}

TEST(Value, Rendering) {
    EXPECT_EQ(to_string(Value{}), "<>");
    EXPECT_EQ(format_real(0.1), "0.1");
    EXPECT_EQ(errc_name(Errc::unknown_range), "UnknownRange");
}
