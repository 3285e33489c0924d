#include "doctest.h"

TEST_SUITE("simgen") {}
