# Ensures the tests directory is importable (shared oracle helpers live in
# oracles.py next to the test modules).
