/**
 * Wire client: resolves memories through the name service, keeps one
 * serialized connection per memory server, and dispatches update
 * notifications to subscription handlers, one at a time per subscription.
 */

import * as net from "node:net";

import {
  type DataObject,
  expectBool,
  expectMap,
  expectString,
  map,
  string,
} from "./values.js";
import {
  type CommitReply,
  type EntityUpdate,
  FrameParser,
  MSG_ADMIN,
  MSG_COMMIT,
  MSG_ERROR,
  MSG_MNS_RESOLVE,
  MSG_NOTIFY,
  MSG_QUERY,
  MSG_SUBSCRIBE,
  MSG_UNSUBSCRIBE,
  type Notification,
  type QueryReply,
  type SimpleQuery,
  commitPayload,
  packFrame,
  parseCommitReply,
  parseNotification,
  parseQueryReply,
  queryPayload,
} from "./wire.js";

export interface Endpoint {
  host: string;
  port: number;
}

export class ServerError extends Error {
  constructor(
    public readonly code: string,
    message: string,
  ) {
    super(`${code}: ${message}`);
    this.name = "ServerError";
  }
}

export class NotFoundError extends Error {}

type Reply = { msgType: number; payload: DataObject };

export type NotifyHandler = (notification: Notification) => void | Promise<void>;

export class Subscription {
  constructor(
    private readonly connection: Connection,
    public readonly subId: bigint,
    public readonly prefix: string,
    public readonly handler: NotifyHandler,
  ) {}

  public delivered = 0;
  public handlerErrors = 0;
  private chain: Promise<void> = Promise.resolve();

  /** Queue a notification; handlers run strictly one at a time. */
  dispatch(notification: Notification): void {
    this.chain = this.chain.then(async () => {
      this.delivered += 1;
      try {
        await this.handler(notification);
      } catch {
        this.handlerErrors += 1;
      }
    });
  }

  async unsubscribe(): Promise<void> {
    await this.connection.unsubscribe(this);
  }
}

export class Connection {
  private socket: net.Socket;
  private parser = new FrameParser();
  private pending: Array<{
    resolve: (reply: Reply) => void;
    reject: (error: Error) => void;
  }> = [];
  private subscriptions = new Map<bigint, Subscription>();
  private closed = false;

  private constructor(socket: net.Socket) {
    this.socket = socket;
    socket.on("data", (chunk: Buffer) => {
      let frames;
      try {
        frames = this.parser.push(new Uint8Array(chunk));
      } catch (error) {
        this.failAll(error as Error);
        socket.destroy();
        return;
      }
      for (const frame of frames) {
        if (frame.msgType === MSG_NOTIFY) {
          const notification = parseNotification(frame.payload);
          const subscription = this.subscriptions.get(notification.sub);
          subscription?.dispatch(notification);
          continue;
        }
        const slot = this.pending.shift();
        slot?.resolve({ msgType: frame.msgType, payload: frame.payload });
      }
    });
    socket.on("error", (error) => this.failAll(error));
    socket.on("close", () => this.failAll(new Error("connection closed")));
  }

  static connect(endpoint: Endpoint): Promise<Connection> {
    return new Promise((resolve, reject) => {
      const socket = net.createConnection(endpoint.port, endpoint.host);
      socket.setNoDelay(true);
      socket.once("connect", () => resolve(new Connection(socket)));
      socket.once("error", reject);
    });
  }

  private failAll(error: Error): void {
    if (this.closed) return;
    this.closed = true;
    for (const slot of this.pending.splice(0)) slot.reject(error);
  }

  request(msgType: number, payload: DataObject): Promise<Reply> {
    if (this.closed) {
      return Promise.reject(new Error("connection is closed"));
    }
    return new Promise<Reply>((resolve, reject) => {
      this.pending.push({ resolve, reject });
      this.socket.write(packFrame(msgType, payload));
    }).then((reply) => {
      if (reply.msgType === MSG_ERROR) {
        const entries = expectMap(reply.payload);
        throw new ServerError(
          expectString(entries.get("code")!),
          expectString(entries.get("message")!),
        );
      }
      return reply;
    });
  }

  async commit(updates: EntityUpdate[]): Promise<CommitReply> {
    const reply = await this.request(MSG_COMMIT, commitPayload(updates));
    return parseCommitReply(reply.payload);
  }

  async query(query: SimpleQuery): Promise<QueryReply> {
    const reply = await this.request(MSG_QUERY, queryPayload(query));
    return parseQueryReply(reply.payload);
  }

  async subscribe(prefix: string, handler: NotifyHandler): Promise<Subscription> {
    const reply = await this.request(
      MSG_SUBSCRIBE,
      map({ prefix: string(prefix) }),
    );
    const subId = (expectMap(reply.payload).get("sub") as any).value as bigint;
    const subscription = new Subscription(this, subId, prefix, handler);
    this.subscriptions.set(subId, subscription);
    return subscription;
  }

  async unsubscribe(subscription: Subscription): Promise<void> {
    this.subscriptions.delete(subscription.subId);
    await this.request(MSG_UNSUBSCRIBE, map({ sub: { kind: "int64", value: subscription.subId } as DataObject }));
  }

  async admin(command: string, args: Record<string, DataObject> = {}): Promise<Map<string, DataObject>> {
    const reply = await this.request(
      MSG_ADMIN,
      map({ command: string(command), ...args }),
    );
    return expectMap(reply.payload);
  }

  close(): void {
    this.closed = true;
    this.socket.destroy();
  }
}

export class MemoryClient {
  private handles = new Map<string, Connection>();
  public cacheHits = 0;

  constructor(private readonly mns: Endpoint) {}

  /** One-shot resolve against the name service. */
  async resolve(idText: string): Promise<Endpoint> {
    const connection = await Connection.connect(this.mns);
    try {
      const reply = await connection.request(
        MSG_MNS_RESOLVE,
        map({ id: string(idText) }),
      );
      const entries = expectMap(reply.payload);
      if (!expectBool(entries.get("found")!)) {
        throw new NotFoundError(`memory of ${idText} is not registered`);
      }
      return {
        host: expectString(entries.get("host")!),
        port: Number((entries.get("port") as any).value),
      };
    } finally {
      connection.close();
    }
  }

  async connect(idText: string): Promise<Connection> {
    const memoryName = idText.split("/")[0];
    const cached = this.handles.get(memoryName);
    if (cached) {
      this.cacheHits += 1;
      return cached;
    }
    const endpoint = await this.resolve(idText);
    const connection = await Connection.connect(endpoint);
    this.handles.set(memoryName, connection);
    return connection;
  }

  close(): void {
    for (const connection of this.handles.values()) connection.close();
    this.handles.clear();
  }
}
