use serde_json::{json, Value};

fn op(summary: &str, status: &str) -> Value {
    json!({
        "summary": summary,
        "responses": {
            status: { "description": "success", "content": { "application/json": { "schema": { "type": "object" } } } },
            "default": { "description": "error", "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Error" } } } }
        }
    })
}

fn with_params(mut op: Value, params: &[(&str, &str)]) -> Value {
    let list: Vec<Value> = params
        .iter()
        .map(|(name, place)| {
            json!({
                "name": name,
                "in": place,
                "required": *place == "path",
                "schema": { "type": "string" }
            })
        })
        .collect();
    op["parameters"] = Value::Array(list);
    op
}

pub fn document() -> Value {
    let id = [("id", "path")];
    json!({
        "openapi": "3.0.3",
        "info": {
            "title": "driftlab",
            "version": env!("CARGO_PKG_VERSION"),
            "description": "Concept-drift sessions: drift series, mixture components, projections, density diffs and weighted ensembles. Mutations accept If-Match with the last seen revision; responses carry it as ETag."
        },
        "servers": [{ "url": "/v1" }],
        "paths": {
            "/health": { "get": op("Liveness probe", "200") },
            "/spec": { "get": op("This document", "200") },
            "/sessions": {
                "get": op("List sessions", "200"),
                "post": op("Create a session from CSV and run the offline fit", "201")
            },
            "/sessions/import": { "post": with_params(op("Load an exported session document", "201"), &[("id", "query")]) },
            "/sessions/{id}": {
                "get": with_params(op("Session summary", "200"), &id),
                "delete": with_params(op("Delete a session", "204"), &id)
            },
            "/sessions/{id}/config": { "get": with_params(op("Session configuration", "200"), &id) },
            "/sessions/{id}/export": { "get": with_params(op("Full session document", "200"), &id) },
            "/sessions/{id}/stream": { "post": with_params(op("Append rows and advance the window", "200"), &id) },
            "/sessions/{id}/drift": {
                "get": with_params(op("Drift series", "200"), &[("id", "path"), ("features", "query"), ("clusters", "query")])
            },
            "/sessions/{id}/samples": {
                "get": with_params(op("Samples of a selection", "200"), &[("id", "path"), ("selection", "query")])
            },
            "/sessions/{id}/components": { "get": with_params(op("Mixture components", "200"), &id) },
            "/sessions/{id}/components/merge": { "post": with_params(op("Merge components", "200"), &id) },
            "/sessions/{id}/projection": { "get": with_params(op("Latest projection and staleness", "200"), &id) },
            "/sessions/{id}/projection/refresh": {
                "post": with_params(op("Start a projection solve", "202"), &[("id", "path"), ("wait", "query")])
            },
            "/sessions/{id}/density-diff": {
                "get": with_params(op("Signed density difference grid", "200"), &[("id", "path"), ("newer", "query"), ("older", "query")])
            },
            "/sessions/{id}/learners": {
                "get": with_params(op("Base learners", "200"), &id),
                "post": with_params(op("Train a base learner", "201"), &id)
            },
            "/sessions/{id}/ensemble": {
                "get": with_params(op("Ensemble members and weights", "200"), &id),
                "put": with_params(op("Choose ensemble members", "200"), &id)
            },
            "/sessions/{id}/ensemble/update": { "post": with_params(op("Weighted-majority update on labeled samples", "200"), &id) },
            "/sessions/{id}/predict": { "post": with_params(op("Ensemble prediction", "200"), &id) },
            "/sessions/{id}/performance": {
                "get": with_params(op("Per-class confidence-binned counts", "200"), &[("id", "path"), ("selection", "query"), ("bins", "query"), ("compare", "query")])
            },
            "/sessions/{id}/samples-of-interest": {
                "get": with_params(op("Named sample sets", "200"), &id),
                "post": with_params(op("Store a named sample set", "201"), &id)
            },
            "/sessions/{id}/samples-of-interest/{name}": {
                "get": with_params(op("One named sample set", "200"), &[("id", "path"), ("name", "path")])
            }
        },
        "components": {
            "schemas": {
                "Error": {
                    "type": "object",
                    "required": ["code", "message"],
                    "properties": {
                        "code": { "type": "string" },
                        "message": { "type": "string" },
                        "detail": {}
                    }
                }
            }
        }
    })
}
