#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "iotguard/csv.hpp"

using namespace iotguard;

TEST(Csv, QuotedFieldsAndEscapes) {
  const auto rows = csv::parse("a,b\n\"x,1\",\"he said \"\"hi\"\"\"\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1][0], "x,1");
  EXPECT_EQ(rows[1][1], "he said \"hi\"");
}

TEST(Csv, CrlfAndBlankLines) {
  const auto rows = csv::parse("a,b\r\n\r\n1,2\r\n\n3,\r\n");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[2], (csv::Record{"3", ""}));
}

TEST(Csv, NoTrailingNewline) {
  const auto rows = csv::parse("a\n1");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1][0], "1");
}

TEST(Csv, UnterminatedQuoteIsSchemaError) {
  try {
    csv::parse("a\n\"oops\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::schema);
  }
}

TEST(Csv, JoinEscapesRoundTrip) {
  const csv::Record rec{"plain", "with,comma", "with \"quote\"", ""};
  const auto back = csv::parse("h1,h2,h3,h4\n" + csv::join(rec) + "\n");
  EXPECT_EQ(back[1], rec);
}

TEST(Csv, ParseNumber) {
  EXPECT_EQ(csv::parse_number("1.5"), 1.5);
  EXPECT_EQ(csv::parse_number(" -2 "), -2.0);
  EXPECT_EQ(csv::parse_number("+3e2"), 300.0);
  EXPECT_FALSE(csv::parse_number("abc"));
  EXPECT_FALSE(csv::parse_number(""));
  EXPECT_FALSE(csv::parse_number("nan"));
  EXPECT_FALSE(csv::parse_number("inf"));
  EXPECT_FALSE(csv::parse_number("1.5x"));
}

TEST(Csv, FormatNumberRoundTripsExactly) {
  for (double v : {0.1, 1.0 / 3.0, -1e-300, 123456789.125, std::numeric_limits<double>::denorm_min()})
    EXPECT_EQ(*csv::parse_number(csv::format_number(v)), v);
  EXPECT_EQ(csv::format_fixed(0.97944, 4), "0.9794");
}
