"""Hedging and pricing of claims on two default times."""
