// Typed client for the review service JSON API (/api/v1).
// No runtime dependencies: the emitted modules load straight off /static/.

export type SessionKind = 'selection' | 'assessment'

export interface SessionSummary {
  id: string
  kind: SessionKind
  counts: { candidates?: number }
}

export interface SelectionPayload {
  id: string
  kind: 'selection'
  state: string
  outcome_id: string
  original_label: string
  original_image: string
  candidate_images: string[]
  count: number
}

export interface AssessmentPayload {
  id: string
  kind: 'assessment'
  state: string
  outcome_id: string
  image: string
}

export type SessionPayload = SelectionPayload | AssessmentPayload

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message)
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>

const asError = async (resp: Response): Promise<ApiError> => {
  let detail = resp.statusText
  try {
    const body = (await resp.json()) as { detail?: unknown }
    if (body && body.detail !== undefined) detail = JSON.stringify(body.detail)
  } catch {
    /* non-JSON error body; keep the status text */
  }
  return new ApiError(resp.status, detail)
}

export const createApi = (fetchImpl: FetchLike, base = '/api/v1') => {
  const listSessions = async (): Promise<SessionSummary[]> => {
    const resp = await fetchImpl(`${base}/sessions`)
    if (!resp.ok) throw await asError(resp)
    return (await resp.json()) as SessionSummary[]
  }

  const getSession = async (id: string): Promise<SessionPayload> => {
    const resp = await fetchImpl(`${base}/sessions/${id}`)
    if (!resp.ok) throw await asError(resp)
    return (await resp.json()) as SessionPayload
  }

  const postSelection = async (id: string, index: number): Promise<void> => {
    const resp = await fetchImpl(`${base}/sessions/${id}/selection`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ index }),
    })
    if (!resp.ok) throw await asError(resp)
  }

  const postAssessment = async (
    id: string,
    q1: boolean,
    q2: string,
  ): Promise<void> => {
    const resp = await fetchImpl(`${base}/sessions/${id}/assessment`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ q1, q2 }),
    })
    if (!resp.ok) throw await asError(resp)
  }

  return { listSessions, getSession, postSelection, postAssessment }
}

export type Api = ReturnType<typeof createApi>
