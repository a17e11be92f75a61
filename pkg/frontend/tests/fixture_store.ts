// In-memory mirror of the review server's session state machine, exposed
// through a fetch-compatible handler so client flows can run end to end.

import type { FetchLike } from '../src/api.js'

type Kind = 'selection' | 'assessment'

interface FixtureSession {
  id: string
  kind: Kind
  state: 'pending' | 'resolved' | 'expired'
  payload: Record<string, unknown>
  resolution: Record<string, unknown> | null
}

export interface PostedBody {
  url: string
  body: unknown
}

const json = (status: number, body: unknown): Response =>
  new Response(JSON.stringify(body), {
    status,
    headers: { 'content-type': 'application/json' },
  })

export class FixtureStore {
  private sessions = new Map<string, FixtureSession>()
  readonly posted: PostedBody[] = []
  private counter = 0

  addSelection(candidates: number, originalLabel = 'มค4364'): FixtureSession {
    const id = `fx${++this.counter}`
    const session: FixtureSession = {
      id,
      kind: 'selection',
      state: 'pending',
      resolution: null,
      payload: {
        outcome_id: `outcome-${id}`,
        original_label: originalLabel,
        original_image: `/img/${id}-orig.png`,
        candidate_images: Array.from(
          { length: candidates },
          (_, i) => `/img/${id}-c${i}.png`,
        ),
        count: candidates,
      },
    }
    this.sessions.set(id, session)
    return session
  }

  addAssessment(): FixtureSession {
    const id = `fx${++this.counter}`
    const session: FixtureSession = {
      id,
      kind: 'assessment',
      state: 'pending',
      resolution: null,
      payload: {
        outcome_id: `outcome-${id}`,
        image: `/img/${id}.png`,
      },
    }
    this.sessions.set(id, session)
    return session
  }

  get(id: string): FixtureSession | undefined {
    return this.sessions.get(id)
  }

  // Fetch-shaped entry point covering the API the client uses.
  fetch: FetchLike = async (url, init) => {
    await Promise.resolve() // force async interleaving like a real socket
    const method = init?.method ?? 'GET'
    const listMatch = url.match(/\/api\/v1\/sessions$/)
    const getMatch = url.match(/\/api\/v1\/sessions\/([^/]+)$/)
    const postMatch = url.match(/\/api\/v1\/sessions\/([^/]+)\/(selection|assessment)$/)

    if (method === 'GET' && listMatch) {
      const out = [...this.sessions.values()]
        .filter((s) => s.state === 'pending')
        .map((s) => ({
          id: s.id,
          kind: s.kind,
          counts:
            s.kind === 'selection'
              ? { candidates: s.payload.count as number }
              : {},
        }))
      return json(200, out)
    }

    if (method === 'GET' && getMatch) {
      const session = this.sessions.get(getMatch[1]!)
      if (!session) return json(404, { detail: 'unknown session' })
      return json(200, {
        id: session.id,
        kind: session.kind,
        state: session.state,
        ...session.payload,
      })
    }

    if (method === 'POST' && postMatch) {
      const [, id, endpoint] = postMatch
      const session = this.sessions.get(id!)
      if (!session) return json(404, { detail: 'unknown session' })
      const body = JSON.parse((init?.body as string) ?? 'null') as Record<
        string,
        unknown
      >
      this.posted.push({ url, body })
      if (endpoint === 'selection') {
        if (session.kind !== 'selection')
          return json(422, { detail: 'not a selection session' })
        const index = body.index
        if (
          typeof index !== 'number' ||
          !Number.isInteger(index) ||
          index < 0 ||
          index >= (session.payload.count as number)
        ) {
          return json(422, { detail: 'index out of range' })
        }
        if (session.state !== 'pending')
          return json(409, { detail: 'already resolved' })
        session.state = 'resolved'
        session.resolution = { index }
        return json(200, { ok: true })
      }
      if (session.kind !== 'assessment')
        return json(422, { detail: 'not an assessment session' })
      if (typeof body.q1 !== 'boolean' || typeof body.q2 !== 'string')
        return json(422, { detail: 'malformed body' })
      if (session.state !== 'pending')
        return json(409, { detail: 'already resolved' })
      session.state = 'resolved'
      session.resolution = { q1: body.q1, q2: body.q2 }
      return json(200, { ok: true })
    }

    return json(404, { detail: `no route for ${method} ${url}` })
  }
}
