"""Hypermedia environment: HTTP plumbing, the environment service and its client."""

from hypercoord.env.http import App, HttpClient, Network, Request, Response, serve, serve_in_thread
from hypercoord.env.environment import (
    FORWARDED, MEDIA_TYPES, REDIRECTED, STORED, Environment, NotModified, RegistryDecision,
    Resource, Subscription,
)
from hypercoord.env.client import EnvironmentClient, NavigationResult, has_action_of_type

__all__ = [
    "App", "HttpClient", "Network", "Request", "Response", "serve", "serve_in_thread",
    "FORWARDED", "MEDIA_TYPES", "REDIRECTED", "STORED", "Environment", "NotModified",
    "RegistryDecision", "Resource", "Subscription",
    "EnvironmentClient", "NavigationResult", "has_action_of_type",
]
