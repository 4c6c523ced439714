"""Message passing between local frames and the PointNet++-style pipeline."""
