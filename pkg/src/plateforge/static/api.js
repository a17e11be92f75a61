// Typed client for the review service JSON API (/api/v1).
// No runtime dependencies: the emitted modules load straight off /static/.
export class ApiError extends Error {
    constructor(status, message) {
        super(message);
        this.status = status;
    }
}
const asError = async (resp) => {
    let detail = resp.statusText;
    try {
        const body = (await resp.json());
        if (body && body.detail !== undefined)
            detail = JSON.stringify(body.detail);
    }
    catch {
        /* non-JSON error body; keep the status text */
    }
    return new ApiError(resp.status, detail);
};
export const createApi = (fetchImpl, base = '/api/v1') => {
    const listSessions = async () => {
        const resp = await fetchImpl(`${base}/sessions`);
        if (!resp.ok)
            throw await asError(resp);
        return (await resp.json());
    };
    const getSession = async (id) => {
        const resp = await fetchImpl(`${base}/sessions/${id}`);
        if (!resp.ok)
            throw await asError(resp);
        return (await resp.json());
    };
    const postSelection = async (id, index) => {
        const resp = await fetchImpl(`${base}/sessions/${id}/selection`, {
            method: 'POST',
            headers: { 'content-type': 'application/json' },
            body: JSON.stringify({ index }),
        });
        if (!resp.ok)
            throw await asError(resp);
    };
    const postAssessment = async (id, q1, q2) => {
        const resp = await fetchImpl(`${base}/sessions/${id}/assessment`, {
            method: 'POST',
            headers: { 'content-type': 'application/json' },
            body: JSON.stringify({ q1, q2 }),
        });
        if (!resp.ok)
            throw await asError(resp);
    };
    return { listSessions, getSession, postSelection, postAssessment };
};
