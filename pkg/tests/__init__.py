"""Tests package for the extremum seeker."""
