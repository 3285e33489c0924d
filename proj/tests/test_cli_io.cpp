#include "doctest.h"

TEST_SUITE("cli_io") {}
