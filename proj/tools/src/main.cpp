#include "app.hpp"

int main(int argc, char** argv) { return prinstrat::app::run(argc, argv); }
