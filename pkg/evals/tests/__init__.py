"""kinetic-gmsfem test suite."""
