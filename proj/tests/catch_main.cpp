// Catch2 v3 amalgamated translation unit; it supplies main().
#include <catch2/catch_amalgamated.cpp>
